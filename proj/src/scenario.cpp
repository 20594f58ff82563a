#include "spadmon/scenario.hpp"

#include <cctype>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "spadmon/errors.hpp"
#include "spadmon/event_io.hpp"
#include "spadmon/model.hpp"

namespace spadmon {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void field_error(const std::string& path, const std::string& why) {
    throw std::runtime_error("config field '" + path + "': " + why);
}

double get_double(const json& j, const std::string& prefix, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    // NaN fields round-trip as null: estimates from the tail-line
    // fallback carry no trap parameters.
    if (v.is_null()) return fallback;
    if (!v.is_number()) field_error(prefix + key, "expected a number");
    return v.get<double>();
}

double require_double(const json& j, const std::string& prefix, const char* key) {
    if (!j.contains(key)) field_error(prefix + key, "required field is missing");
    return get_double(j, prefix, key, 0.0);
}

std::uint64_t get_uint(const json& j, const std::string& prefix, const char* key,
                       std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    field_error(prefix + key, "expected a non-negative integer");
}

std::int64_t get_int(const json& j, const std::string& prefix, const char* key,
                     std::int64_t fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_integer() && !v.is_number_unsigned())
        field_error(prefix + key, "expected an integer");
    return v.get<std::int64_t>();
}

bool get_bool(const json& j, const std::string& prefix, const char* key, bool fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) field_error(prefix + key, "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& j, const std::string& prefix, const char* key,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_string()) field_error(prefix + key, "expected a string");
    return v.get<std::string>();
}

json parse_json_text(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string(what) + ": " + e.what());
    }
}

DetectorParams parse_detector(const json& j) {
    DetectorParams d;
    if (!j.is_object()) field_error("detector", "expected an object");
    d.mu = get_double(j, "detector.", "mu", d.mu);
    d.eta = get_double(j, "detector.", "eta", d.eta);
    d.p_dark = get_double(j, "detector.", "p_dark", d.p_dark);
    d.p0 = get_double(j, "detector.", "p0", d.p0);
    d.tau_trap_s = get_double(j, "detector.", "tau_trap_s", d.tau_trap_s);
    d.gate_period_s = get_double(j, "detector.", "gate_period_s", d.gate_period_s);
    d.deadtime_gates = get_uint(j, "detector.", "deadtime_gates", d.deadtime_gates);
    d.sample_period_s = get_double(j, "detector.", "sample_period_s", d.sample_period_s);
    return d;
}

FreeRunningParams parse_free_running(const json& j) {
    FreeRunningParams f;
    if (!j.is_object()) field_error("free_running", "expected an object");
    f.count_rate_hz = get_double(j, "free_running.", "count_rate_hz", f.count_rate_hz);
    f.deadtime_s = get_double(j, "free_running.", "deadtime_s", f.deadtime_s);
    f.sample_period_s = get_double(j, "free_running.", "sample_period_s", f.sample_period_s);
    f.duration_s = get_double(j, "free_running.", "duration_s", f.duration_s);
    return f;
}

AttackScenario parse_attack(const json& j) {
    if (!j.is_object()) field_error("scenario", "expected an object");
    const std::string type = get_string(j, "scenario.", "type", "none");
    if (type == "none") return NoAttack{};
    if (type == "after_gate") {
        AfterGateAttack a;
        a.fraction_attacked = get_double(j, "scenario.", "fraction_attacked", a.fraction_attacked);
        a.eve_efficiency = get_double(j, "scenario.", "eve_efficiency", a.eve_efficiency);
        a.basis_match_prob = get_double(j, "scenario.", "basis_match_prob", a.basis_match_prob);
        a.subthreshold_seed = get_double(j, "scenario.", "subthreshold_seed", a.subthreshold_seed);
        a.forced_seed = get_double(j, "scenario.", "forced_seed", a.forced_seed);
        a.pulse_offset_samples = static_cast<std::uint32_t>(
            get_uint(j, "scenario.", "pulse_offset_samples", a.pulse_offset_samples));
        a.rate_compensation = get_double(j, "scenario.", "rate_compensation", a.rate_compensation);
        return a;
    }
    if (type == "faint_after_gate") {
        FaintAfterGateAttack a;
        a.eta_match = get_double(j, "scenario.", "eta_match", a.eta_match);
        a.eta_mismatch = get_double(j, "scenario.", "eta_mismatch", a.eta_mismatch);
        a.seed_factor = get_double(j, "scenario.", "seed_factor", a.seed_factor);
        return a;
    }
    if (type == "time_shift") {
        TimeShiftAttack a;
        a.delay_samples = static_cast<std::uint32_t>(
            get_uint(j, "scenario.", "delay_samples", a.delay_samples));
        a.delay_prob = get_double(j, "scenario.", "delay_prob", a.delay_prob);
        a.eta_early = get_double(j, "scenario.", "eta_early", a.eta_early);
        a.eta_late = get_double(j, "scenario.", "eta_late", a.eta_late);
        return a;
    }
    if (type == "cw_blinding") {
        CwBlindingAttack a;
        a.enforced_gap_s = get_double(j, "scenario.", "enforced_gap_s", a.enforced_gap_s);
        return a;
    }
    field_error("scenario.type", "unknown type '" + type +
                                     "' (expected none, after_gate, faint_after_gate, "
                                     "time_shift, cw_blinding)");
}

ParameterEstimate parse_estimate(const json& j, const std::string& prefix) {
    if (!j.is_object()) field_error(prefix, "expected an object");
    ParameterEstimate e;
    e.q_total = require_double(j, prefix + ".", "q_total");
    e.mu_eta = get_double(j, prefix + ".", "mu_eta", kNaN);
    e.p_dark_assumed = get_double(j, prefix + ".", "p_dark_assumed", kNaN);
    e.p0_hat = get_double(j, prefix + ".", "p0_hat", kNaN);
    e.tau_hat_s = get_double(j, prefix + ".", "tau_hat", kNaN);
    e.gate_period_s = get_double(j, prefix + ".", "gate_period_s", 0.0);
    e.deadtime_units = get_int(j, prefix + ".", "deadtime_units", 0);
    e.r_squared = get_double(j, prefix + ".", "r_squared", kNaN);
    e.n_samples = get_uint(j, prefix + ".", "n_samples", 0);
    return e;
}

json estimate_to_json_obj(const ParameterEstimate& e) {
    json out;
    out["q_total"] = e.q_total;
    out["mu_eta"] = e.mu_eta;
    out["p_dark_assumed"] = e.p_dark_assumed;
    out["p0_hat"] = e.p0_hat;
    out["tau_hat"] = e.tau_hat_s;
    out["p_after"] = e.p_after();
    out["deadtime_units"] = e.deadtime_units;
    out["r_squared"] = e.r_squared;
    out["n_samples"] = e.n_samples;
    return out;
}

Baseline parse_baseline(const json& j) {
    if (!j.is_object()) field_error("baseline", "expected an object");
    Baseline b;
    if (!j.contains("nominal")) field_error("baseline.nominal", "required field is missing");
    b.nominal = parse_estimate(j.at("nominal"), "baseline.nominal");
    b.nominal_afterpulse =
        get_double(j, "baseline.", "nominal_afterpulse", b.nominal_afterpulse);
    b.afterpulse_alarm_threshold =
        get_double(j, "baseline.", "afterpulse_alarm_threshold", b.afterpulse_alarm_threshold);
    b.afterpulse_noise_scale =
        get_double(j, "baseline.", "afterpulse_noise_scale", b.afterpulse_noise_scale);
    b.reference_n = get_uint(j, "baseline.", "reference_n", b.reference_n);
    b.alarm_z = get_double(j, "baseline.", "alarm_z", b.alarm_z);
    b.decrease_band = get_double(j, "baseline.", "decrease_band", b.decrease_band);
    b.decrease_floor = get_double(j, "baseline.", "decrease_floor", b.decrease_floor);
    b.efficiency_rel_tol = get_double(j, "baseline.", "efficiency_rel_tol", b.efficiency_rel_tol);
    b.nominal_deadtime_units =
        get_int(j, "baseline.", "nominal_deadtime_units", b.nominal.deadtime_units);
    b.expected_offset_samples =
        get_int(j, "baseline.", "expected_offset_samples", b.expected_offset_samples);
    b.offset_jitter_samples =
        get_uint(j, "baseline.", "offset_jitter_samples", b.offset_jitter_samples);
    b.min_peak_fraction = get_double(j, "baseline.", "min_peak_fraction", b.min_peak_fraction);
    b.min_samples = get_uint(j, "baseline.", "min_samples", b.min_samples);
    b.validate();
    return b;
}

ScenarioConfig parse_scenario(const json& j, const fs::path& base_dir) {
    ScenarioConfig c;
    c.name = get_string(j, "", "name", "");
    const std::string mode = get_string(j, "", "mode", "gated");
    if (mode == "gated")
        c.mode = RunMode::gated;
    else if (mode == "free_running")
        c.mode = RunMode::free_running;
    else
        field_error("mode", "expected 'gated' or 'free_running', got '" + mode + "'");

    if (j.contains("detector")) c.detector = parse_detector(j.at("detector"));
    if (j.contains("free_running")) c.free_running = parse_free_running(j.at("free_running"));
    if (j.contains("scenario")) c.scenario = parse_attack(j.at("scenario"));
    c.n_detections = get_uint(j, "", "n_detections", 0);
    c.seed = get_uint(j, "", "seed", c.seed);
    c.input_path = get_string(j, "", "input", "");
    if (!c.input_path.empty() && fs::path(c.input_path).is_relative())
        c.input_path = (base_dir / c.input_path).string();

    const bool gated = c.mode == RunMode::gated;
    AnalysisConfig& a = c.analysis;
    a.unit = gated ? IntervalUnit::gates : IntervalUnit::samples;
    a.fit.gate_period_s = gated ? c.detector.gate_period_s : c.free_running.sample_period_s;
    a.fit.tau_hint_s = gated ? c.detector.tau_trap_s : c.free_running.sample_period_s;
    a.fit.p_dark_assumed = gated ? c.detector.p_dark : 0.0;
    if (j.contains("analysis")) {
        const json& ja = j.at("analysis");
        if (!ja.is_object()) field_error("analysis", "expected an object");
        const std::string unit = get_string(ja, "analysis.", "unit",
                                            unit_name(a.unit));
        a.unit = unit_from_name(unit);
        a.n_bins = get_uint(ja, "analysis.", "n_bins", a.n_bins);
        a.tail_start = get_uint(ja, "analysis.", "tail_start", a.tail_start);
        a.fit.gate_period_s = get_double(ja, "analysis.", "gate_period_s", a.fit.gate_period_s);
        a.fit.tau_hint_s = get_double(ja, "analysis.", "tau_hint_s", a.fit.tau_hint_s);
        a.fit.deadtime_units = get_int(ja, "analysis.", "deadtime_units", a.fit.deadtime_units);
        a.fit.p_dark_assumed =
            get_double(ja, "analysis.", "p_dark_assumed", a.fit.p_dark_assumed);
        a.fit.min_total = get_uint(ja, "analysis.", "min_total", a.fit.min_total);
        a.fit_health_r2 = get_double(ja, "analysis.", "fit_health_r2", a.fit_health_r2);
        a.timing_period_samples =
            get_uint(ja, "analysis.", "timing_period_samples", a.timing_period_samples);
        a.timing_n_bins = get_uint(ja, "analysis.", "timing_n_bins", a.timing_n_bins);
    }

    if (j.contains("baseline") && j.contains("baseline_path"))
        field_error("baseline", "give either an inline baseline or baseline_path, not both");
    if (j.contains("baseline")) c.baseline = parse_baseline(j.at("baseline"));
    if (j.contains("baseline_path")) {
        fs::path p = get_string(j, "", "baseline_path", "");
        if (p.is_relative()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw std::runtime_error("cannot open baseline file '" + p.string() + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        c.baseline = parse_baseline(parse_json_text(buffer.str(), "baseline parse error"));
    }
    return c;
}

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

void write_two_column(const fs::path& path, const IntervalHistogram& h) {
    auto out = open_output(path);
    out << std::setprecision(17);
    const double total = static_cast<double>(h.total());
    for (std::uint64_t m = 1; m <= h.n_bins(); ++m) {
        const std::uint64_t c = h.count(m);
        if (c == 0) continue;  // keeps the columns usable on a log scale
        out << m << ' ' << static_cast<double>(c) / total << '\n';
    }
}

void write_model_curve(const fs::path& path, const ParameterEstimate& e,
                       std::uint64_t last_bin) {
    IntervalModelParams p;
    p.q_total = e.q_total;
    p.p0 = e.p0_hat;
    p.decay = std::exp(-e.gate_period_s / e.tau_hat_s);
    p.deadtime_gates = static_cast<std::uint64_t>(e.deadtime_units);
    auto out = open_output(path);
    out << std::setprecision(17);
    // Same shape normalization the fit applied, so the curve overlays
    // the measured pmf without a vertical offset.
    const double mass = std::max(interval_pmf_model_mass(p), 1e-12);
    for (std::uint64_t m = p.deadtime_gates + 1; m <= last_bin; ++m)
        out << m << ' ' << interval_pmf_model_clamped(m, p) / mass << '\n';
}

json check_to_json(const AlarmCheck& c) {
    json out;
    out["alarm"] = c.alarm;
    out["observed"] = c.observed;
    out["reference"] = c.reference;
    out["threshold"] = c.threshold;
    out["detail"] = c.detail;
    return out;
}

json build_report(const ScenarioConfig& config, const ScenarioAnalysis& a, bool fixed_clock) {
    json report;
    report["generated_at"] = fixed_clock ? "fixed-clock" : iso_now();
    report["scenario"] = config.name.empty() ? "unnamed" : config.name;
    report["mode"] = config.mode == RunMode::gated ? "gated" : "free_running";
    report["seed"] = config.seed;
    report["events"] = a.events.size();
    report["intervals"] = a.histogram.total();
    report["estimate"] = estimate_to_json_obj(a.characterization.estimate);

    json fit;
    fit["attempted"] = a.characterization.fit_attempted;
    fit["converged"] = a.characterization.fit_converged;
    fit["healthy"] = a.characterization.fit_healthy;
    fit["iterations"] = a.characterization.fit_iterations;
    fit["r_squared"] = a.characterization.fit_r_squared;
    fit["tail_start"] = a.characterization.tail_start;
    fit["tail_line_p_after"] = a.characterization.tail_line_p_after;
    fit["afterpulse_metric"] = a.characterization.afterpulse_metric;
    report["fit"] = fit;

    if (a.timing) {
        json timing;
        timing["inconclusive"] = a.timing->inconclusive;
        timing["alarm"] = a.timing->alarm;
        timing["central_to_side_ratio"] = a.timing->central_to_side_ratio;
        json windows = json::array();
        for (const TimingWindow& w : a.timing->windows) {
            json jw;
            jw["period_index"] = w.period_index;
            jw["mass"] = w.mass;
            json peaks = json::array();
            for (const TimingPeak& p : w.peaks) {
                json jp;
                jp["offset"] = p.offset;
                jp["height"] = p.height;
                peaks.push_back(jp);
            }
            jw["peaks"] = peaks;
            windows.push_back(jw);
        }
        timing["windows"] = windows;
        report["timing"] = timing;
    }

    if (a.verdict) {
        const Verdict& v = *a.verdict;
        json jv;
        jv["afterpulse_alarm"] = v.afterpulse_alarm();
        jv["efficiency_alarm"] = v.efficiency_alarm();
        jv["deadtime_alarm"] = v.deadtime_alarm();
        jv["timing_alarm"] = v.timing_alarm();
        jv["timing_evaluated"] = v.timing_evaluated;
        jv["overall"] = v.overall();
        json evidence;
        evidence["afterpulse_increase"] = check_to_json(v.afterpulse_increase);
        evidence["afterpulse_decrease"] = check_to_json(v.afterpulse_decrease);
        evidence["efficiency"] = check_to_json(v.efficiency);
        evidence["deadtime"] = check_to_json(v.deadtime);
        evidence["timing"] = check_to_json(v.timing);
        jv["evidence"] = evidence;
        report["verdict"] = jv;
    }
    return report;
}

void write_analysis_outputs(const ScenarioConfig& config, const ScenarioAnalysis& a,
                            const fs::path& out_dir, bool fixed_clock) {
    fs::create_directories(out_dir);
    {
        auto out = open_output(out_dir / "report.json");
        out << build_report(config, a, fixed_clock).dump(2) << '\n';
    }
    {
        auto out = open_output(out_dir / "histogram.csv");
        a.histogram.write_csv(out);
    }
    write_two_column(out_dir / "interval_pmf.dat", a.histogram);
    if (a.characterization.fit_healthy) {
        std::uint64_t last = a.histogram.n_bins();
        while (last > 1 && a.histogram.count(last) == 0) --last;
        write_model_curve(out_dir / "model_pmf.dat", a.characterization.estimate, last);
    }
    if (a.timing_histogram)
        write_two_column(out_dir / "timing_pmf.dat", *a.timing_histogram);
}

std::string sanitize_name(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return out.empty() ? std::string("unnamed") : out;
}

}  // namespace

ScenarioConfig parse_scenario_config(const std::string& json_text) {
    return parse_scenario(parse_json_text(json_text, "config parse error"), ".");
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(parse_json_text(buffer.str(), "config parse error"),
                          path.has_parent_path() ? path.parent_path() : fs::path("."));
}

Baseline parse_baseline_json(const std::string& json_text) {
    return parse_baseline(parse_json_text(json_text, "baseline parse error"));
}

std::string baseline_to_json(const Baseline& b) {
    json out;
    json nominal = estimate_to_json_obj(b.nominal);
    nominal["gate_period_s"] = b.nominal.gate_period_s;
    out["nominal"] = nominal;
    out["nominal_afterpulse"] = b.nominal_afterpulse;
    out["afterpulse_alarm_threshold"] = b.afterpulse_alarm_threshold;
    out["afterpulse_noise_scale"] = b.afterpulse_noise_scale;
    out["reference_n"] = b.reference_n;
    out["alarm_z"] = b.alarm_z;
    out["decrease_band"] = b.decrease_band;
    out["decrease_floor"] = b.decrease_floor;
    out["efficiency_rel_tol"] = b.efficiency_rel_tol;
    out["nominal_deadtime_units"] = b.nominal_deadtime_units;
    out["expected_offset_samples"] = b.expected_offset_samples;
    out["offset_jitter_samples"] = b.offset_jitter_samples;
    out["min_peak_fraction"] = b.min_peak_fraction;
    out["min_samples"] = b.min_samples;
    return out.dump(2) + "\n";
}

std::string estimate_json(const ParameterEstimate& estimate) {
    return estimate_to_json_obj(estimate).dump(2) + "\n";
}

ScenarioAnalysis analyze_scenario(const ScenarioConfig& config) {
    std::vector<DetectionEvent> events;
    std::optional<IntervalHistogram> direct;

    if (!config.input_path.empty()) {
        std::ifstream sniff(config.input_path);
        if (!sniff) throw std::runtime_error("cannot open input '" + config.input_path + "'");
        std::string first_line;
        std::getline(sniff, first_line);
        sniff.close();
        std::ifstream in(config.input_path);
        if (!first_line.empty() && first_line.front() == '#')
            direct = IntervalHistogram::read_csv(in);
        else if (first_line == "gate_index,sub_gate_sample,cause")
            events = read_gated_csv(in);
        else if (first_line == "absolute_sample,cause")
            events = read_free_running_csv(in);
        else
            throw std::runtime_error("input row 1: unrecognized header '" + first_line + "'");
    } else if (config.mode == RunMode::gated) {
        events = simulate_gated(config.detector, config.scenario, config.n_detections,
                                config.seed);
    } else {
        events = simulate_free_running(config.free_running, config.scenario, config.seed);
    }

    const std::uint64_t samples_per_gate = config.detector.samples_per_gate();

    ScenarioAnalysis result{
        direct ? std::move(*direct)
               : accumulate(events, config.analysis.unit, config.analysis.n_bins,
                            config.analysis.unit == IntervalUnit::samples &&
                                    config.mode == RunMode::gated
                                ? samples_per_gate
                                : 1),
        std::nullopt, Characterization{}, std::nullopt, std::nullopt, {}};

    CharacterizeConfig cc;
    cc.fit = config.analysis.fit;
    cc.tail_start = config.analysis.tail_start;
    cc.fit_health_r2 = config.analysis.fit_health_r2;
    result.characterization = characterize(result.histogram, cc);

    if (config.analysis.timing_period_samples > 0) {
        const std::uint64_t period = config.analysis.timing_period_samples;
        if (result.histogram.unit() == IntervalUnit::samples && events.empty()) {
            result.timing_histogram = result.histogram;
        } else if (!events.empty()) {
            const std::size_t bins = config.analysis.timing_n_bins > 0
                                         ? config.analysis.timing_n_bins
                                         : static_cast<std::size_t>(period * 10 + period / 2);
            result.timing_histogram =
                accumulate(events, IntervalUnit::samples, bins,
                           config.mode == RunMode::gated ? samples_per_gate : 1);
        }
        if (result.timing_histogram) {
            const double fraction =
                config.baseline ? config.baseline->min_peak_fraction : 0.05;
            const std::int64_t offset =
                config.baseline ? config.baseline->expected_offset_samples : 0;
            const std::uint64_t jitter =
                config.baseline ? config.baseline->offset_jitter_samples : 1;
            result.timing = detect_timing_peaks(*result.timing_histogram, period, fraction,
                                                offset, jitter);
        }
    }

    if (config.baseline)
        result.verdict = compare(*config.baseline, result.characterization,
                                 result.timing ? &*result.timing : nullptr);

    result.events = std::move(events);
    return result;
}

int run_simulate(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                 std::ostream& err) {
    try {
        std::vector<DetectionEvent> events;
        if (config.mode == RunMode::gated)
            events = simulate_gated(config.detector, config.scenario, config.n_detections,
                                    config.seed);
        else
            events = simulate_free_running(config.free_running, config.scenario, config.seed);
        fs::create_directories(out_dir);
        auto out = open_output(out_dir / "events.csv");
        if (config.mode == RunMode::gated)
            write_gated_csv(out, events);
        else
            write_free_running_csv(out, events);
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_analyze(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                bool fixed_clock, bool require_baseline, std::ostream& err) {
    try {
        if (require_baseline && !config.baseline) {
            err << "error: monitoring requires a baseline (inline or baseline_path)\n";
            return 1;
        }
        const ScenarioAnalysis analysis = analyze_scenario(config);
        write_analysis_outputs(config, analysis, out_dir, fixed_clock);
        if (analysis.verdict && analysis.verdict->overall()) return 2;
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

std::vector<SuiteMember> parse_suite_config(const std::string& json_text,
                                            const std::filesystem::path& base_dir) {
    const json j = parse_json_text(json_text, "suite parse error");
    if (!j.contains("suite")) field_error("suite", "required field is missing");
    const json& members = j.at("suite");
    if (!members.is_array()) field_error("suite", "expected an array");

    std::vector<SuiteMember> out;
    out.reserve(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        const json& m = members[i];
        const std::string where = "suite[" + std::to_string(i) + "]";
        if (!m.is_object()) field_error(where, "expected an object");
        SuiteMember member;
        member.name = get_string(m, where + ".", "name", "");
        if (member.name.empty()) field_error(where + ".name", "required field is missing");

        if (m.contains("config") && m.contains("config_path"))
            field_error(where, "give either an inline config or config_path, not both");
        if (m.contains("config"))
            member.config = parse_scenario(m.at("config"), base_dir);
        else if (m.contains("config_path")) {
            fs::path p = get_string(m, where + ".", "config_path", "");
            if (p.is_relative()) p = base_dir / p;
            member.config = load_scenario_config(p);
        } else {
            field_error(where, "needs a config or config_path");
        }
        member.config.name = member.name;

        if (m.contains("expected")) {
            const json& e = m.at("expected");
            if (!e.is_object()) field_error(where + ".expected", "expected an object");
            ExpectedBands& bands = member.expected;
            const std::string ep = where + ".expected.";
            if (e.contains("alarm")) bands.alarm = get_bool(e, ep, "alarm", false);
            if (e.contains("afterpulse_min"))
                bands.afterpulse_min = get_double(e, ep, "afterpulse_min", 0.0);
            if (e.contains("afterpulse_max"))
                bands.afterpulse_max = get_double(e, ep, "afterpulse_max", 0.0);
            if (e.contains("rate_min")) bands.rate_min = get_double(e, ep, "rate_min", 0.0);
            if (e.contains("rate_max")) bands.rate_max = get_double(e, ep, "rate_max", 0.0);
            if (e.contains("r_squared_min"))
                bands.r_squared_min = get_double(e, ep, "r_squared_min", 0.0);
            if (e.contains("deadtime_units"))
                bands.deadtime_units = get_int(e, ep, "deadtime_units", 0);
            if (e.contains("timing_peaks"))
                bands.timing_peaks = get_uint(e, ep, "timing_peaks", 0);
        }
        out.push_back(std::move(member));
    }
    return out;
}

namespace {

std::vector<std::string> check_bands(const ExpectedBands& bands, const ScenarioAnalysis& a) {
    std::vector<std::string> violations;
    const Characterization& ch = a.characterization;
    if (bands.alarm) {
        if (!a.verdict)
            violations.push_back("alarm expectation set but no baseline was given");
        else if (a.verdict->overall() != *bands.alarm)
            violations.push_back(std::string("alarm ") +
                                 (a.verdict->overall() ? "raised" : "not raised") +
                                 ", expected " + (*bands.alarm ? "raised" : "not raised"));
    }
    std::ostringstream fmt;
    fmt.precision(5);
    if (bands.afterpulse_min && ch.afterpulse_metric < *bands.afterpulse_min) {
        fmt << "afterpulse " << ch.afterpulse_metric << " below " << *bands.afterpulse_min;
        violations.push_back(fmt.str());
        fmt.str("");
    }
    if (bands.afterpulse_max && ch.afterpulse_metric > *bands.afterpulse_max) {
        fmt << "afterpulse " << ch.afterpulse_metric << " above " << *bands.afterpulse_max;
        violations.push_back(fmt.str());
        fmt.str("");
    }
    const double rate = 1.0 - ch.estimate.q_total;
    if (bands.rate_min && rate < *bands.rate_min) {
        fmt << "rate " << rate << " below " << *bands.rate_min;
        violations.push_back(fmt.str());
        fmt.str("");
    }
    if (bands.rate_max && rate > *bands.rate_max) {
        fmt << "rate " << rate << " above " << *bands.rate_max;
        violations.push_back(fmt.str());
        fmt.str("");
    }
    if (bands.r_squared_min && ch.fit_r_squared < *bands.r_squared_min) {
        fmt << "r_squared " << ch.fit_r_squared << " below " << *bands.r_squared_min;
        violations.push_back(fmt.str());
        fmt.str("");
    }
    if (bands.deadtime_units && ch.estimate.deadtime_units != *bands.deadtime_units)
        violations.push_back("deadtime " + std::to_string(ch.estimate.deadtime_units) +
                             " units, expected " + std::to_string(*bands.deadtime_units));
    if (bands.timing_peaks) {
        if (!a.timing || a.timing->inconclusive) {
            violations.push_back("timing peak expectation set but no conclusive timing scan");
        } else {
            for (const TimingWindow& w : a.timing->windows) {
                if (w.peaks.size() != *bands.timing_peaks) {
                    violations.push_back("window " + std::to_string(w.period_index) + " has " +
                                         std::to_string(w.peaks.size()) + " peaks, expected " +
                                         std::to_string(*bands.timing_peaks));
                    break;
                }
            }
        }
    }
    return violations;
}

}  // namespace

int run_suite(const std::vector<SuiteMember>& members, const std::filesystem::path& out_dir,
              bool fixed_clock, std::ostream& out, std::ostream& err) {
    out << std::left << std::setw(28) << "scenario" << std::right << std::setw(10) << "q_total"
        << std::setw(10) << "rate" << std::setw(12) << "afterpulse" << std::setw(8) << "r2"
        << std::setw(6) << "dead" << std::setw(7) << "alarm" << "  result\n";

    int failures = 0;
    for (const SuiteMember& member : members) {
        std::ostringstream row;
        row << std::left << std::setw(28) << member.name << std::right;
        try {
            const ScenarioAnalysis analysis = analyze_scenario(member.config);
            write_analysis_outputs(member.config, analysis,
                                   out_dir / sanitize_name(member.name), fixed_clock);
            const Characterization& ch = analysis.characterization;
            row << std::fixed << std::setprecision(4) << std::setw(10) << ch.estimate.q_total
                << std::setw(10) << 1.0 - ch.estimate.q_total << std::setw(12)
                << ch.afterpulse_metric << std::setw(8) << std::setprecision(3)
                << ch.fit_r_squared << std::setw(6) << ch.estimate.deadtime_units
                << std::setw(7)
                << (analysis.verdict ? (analysis.verdict->overall() ? "yes" : "no") : "-");
            const auto violations = check_bands(member.expected, analysis);
            if (violations.empty()) {
                row << "  pass";
            } else {
                row << "  FAIL";
                ++failures;
                for (const std::string& v : violations)
                    err << "suite member '" << member.name << "' failed: " << v << "\n";
            }
        } catch (const std::exception& e) {
            row << "  ERROR";
            ++failures;
            err << "suite member '" << member.name << "' error: " << e.what() << "\n";
        }
        out << row.str() << "\n";
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace spadmon
