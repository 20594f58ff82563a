#include "spadmon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "spadmon/rng.hpp"

namespace spadmon {

namespace {

constexpr std::uint64_t kWindowCountFloor = 100;
constexpr std::size_t kMaxWindows = 10;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

std::string format_prob(double v) {
    std::ostringstream out;
    out.precision(4);
    out << v;
    return out.str();
}

}  // namespace

void Baseline::validate() const {
    require(afterpulse_alarm_threshold > 0.0, "afterpulse_alarm_threshold must be positive");
    require(afterpulse_alarm_threshold > nominal_afterpulse,
            "afterpulse_alarm_threshold must sit above the clean-run level");
    require(afterpulse_noise_scale >= 0.0, "afterpulse_noise_scale must be non-negative");
    require(alarm_z >= 0.0, "alarm_z must be non-negative");
    require(decrease_band > 0.0 && decrease_band < 1.0, "decrease_band must be in (0, 1)");
    require(decrease_floor >= 0.0, "decrease_floor must be non-negative");
    require(efficiency_rel_tol > 0.0, "efficiency_rel_tol must be positive");
    require(nominal_deadtime_units >= 0, "nominal_deadtime_units must be non-negative");
    require(min_peak_fraction > 0.0 && min_peak_fraction < 1.0,
            "min_peak_fraction must be in (0, 1)");
    require(min_samples >= 2, "min_samples must be at least 2");
    require(nominal.q_total > 0.0 && nominal.q_total < 1.0,
            "nominal q_total must be in (0, 1)");
}

Baseline make_baseline(const Characterization& clean, double noise_scale,
                       std::uint64_t reference_n) {
    Baseline b;
    b.nominal = clean.estimate;
    b.nominal_afterpulse = clean.afterpulse_metric;
    b.afterpulse_alarm_threshold = std::max(0.005, 2.0 * clean.afterpulse_metric);
    b.afterpulse_noise_scale = noise_scale;
    b.reference_n = reference_n;
    b.nominal_deadtime_units = clean.estimate.deadtime_units;
    b.validate();
    return b;
}

TimingReport detect_timing_peaks(const IntervalHistogram& h, std::uint64_t period_samples,
                                 double min_peak_fraction,
                                 std::int64_t expected_offset_samples,
                                 std::uint64_t offset_jitter_samples) {
    require(h.unit() == IntervalUnit::samples, "timing analysis needs a sample-unit histogram");
    require(period_samples >= 2, "period_samples must be at least 2");
    require(min_peak_fraction > 0.0 && min_peak_fraction < 1.0,
            "min_peak_fraction must be in (0, 1)");

    TimingReport report;
    report.central_to_side_ratio = std::numeric_limits<double>::quiet_NaN();

    const std::uint64_t half = period_samples / 2;
    double ratio_sum = 0.0;
    std::size_t ratio_count = 0;

    for (std::uint64_t k = 1; report.windows.size() < kMaxWindows; ++k) {
        const std::uint64_t center = k * period_samples;
        if (center > h.n_bins() + half) break;
        const std::uint64_t lo = center > half ? std::max<std::uint64_t>(1, center - half) : 1;
        const std::uint64_t hi = std::min<std::uint64_t>(h.n_bins(), center + half - 1);
        if (lo > hi) break;

        std::uint64_t mass = 0;
        for (std::uint64_t m = lo; m <= hi; ++m) mass += h.count(m);
        if (mass == 0) continue;  // empty period, keep scanning
        if (mass < kWindowCountFloor) break;  // statistics starved from here on

        TimingWindow window;
        window.period_index = k;
        window.mass = mass;

        // Plateau runs of equal counts collapse to one candidate; a run
        // is a peak when both in-window neighbours are strictly lower
        // and it carries the required share of the window's mass.
        const std::uint64_t min_height = static_cast<std::uint64_t>(
            std::ceil(min_peak_fraction * static_cast<double>(mass)));
        std::uint64_t run_begin = lo;
        std::uint64_t run_count = h.count(lo);
        for (std::uint64_t m = lo + 1; m <= hi + 1; ++m) {
            const std::uint64_t c = m <= hi ? h.count(m) : 0;
            if (m <= hi && c == run_count) continue;
            const std::uint64_t left = run_begin > lo ? h.count(run_begin - 1) : 0;
            const std::uint64_t right = m <= hi ? c : 0;
            if (run_count > 0 && run_count >= min_height && run_count > left &&
                run_count > right) {
                TimingPeak peak;
                const std::uint64_t mid = run_begin + (m - 1 - run_begin) / 2;
                peak.offset = static_cast<std::int64_t>(mid) - static_cast<std::int64_t>(center);
                peak.height = run_count;
                window.peaks.push_back(peak);
            }
            run_begin = m;
            run_count = c;
        }

        if (window.peaks.size() >= 2) {
            report.alarm = true;
            const TimingPeak* central = &window.peaks.front();
            for (const TimingPeak& p : window.peaks) {
                if (std::llabs(p.offset - expected_offset_samples) <
                    std::llabs(central->offset - expected_offset_samples))
                    central = &p;
            }
            std::uint64_t side_max = 0;
            for (const TimingPeak& p : window.peaks)
                if (&p != central) side_max = std::max(side_max, p.height);
            if (side_max > 0) {
                ratio_sum += static_cast<double>(central->height) /
                             static_cast<double>(side_max);
                ++ratio_count;
            }
        } else if (window.peaks.size() == 1) {
            const std::int64_t off = window.peaks.front().offset - expected_offset_samples;
            if (static_cast<std::uint64_t>(std::llabs(off)) > offset_jitter_samples)
                report.alarm = true;
        }

        report.windows.push_back(std::move(window));
    }

    report.inconclusive = report.windows.empty();
    if (report.inconclusive) report.alarm = false;
    if (ratio_count > 0)
        report.central_to_side_ratio = ratio_sum / static_cast<double>(ratio_count);
    return report;
}

Verdict compare(const Baseline& baseline, const Characterization& live,
                const TimingReport* timing) {
    baseline.validate();
    if (live.estimate.n_samples < baseline.min_samples)
        throw std::invalid_argument("characterization holds " +
                                    std::to_string(live.estimate.n_samples) +
                                    " detections, baseline requires " +
                                    std::to_string(baseline.min_samples));
    if (baseline.nominal.gate_period_s > 0.0 && live.estimate.gate_period_s > 0.0) {
        const double rel = std::abs(live.estimate.gate_period_s - baseline.nominal.gate_period_s) /
                           baseline.nominal.gate_period_s;
        if (rel > 1e-9)
            throw std::invalid_argument("baseline and live estimate use different gate periods");
    }

    Verdict v;

    // Afterpulse increase. The margin widens for short runs so the
    // false-alarm rate stays flat: the metric's noise scales as
    // 1/sqrt(n) relative to the calibration run's reference_n.
    double threshold = baseline.afterpulse_alarm_threshold;
    if (baseline.afterpulse_noise_scale > 0.0 && baseline.reference_n > 0 &&
        live.estimate.n_samples > 0) {
        const double inflation = std::sqrt(static_cast<double>(baseline.reference_n) /
                                           static_cast<double>(live.estimate.n_samples));
        threshold = std::max(threshold,
                             baseline.nominal_afterpulse +
                                 baseline.alarm_z * baseline.afterpulse_noise_scale * inflation);
    }
    v.afterpulse_increase.observed = live.afterpulse_metric;
    v.afterpulse_increase.reference = baseline.nominal_afterpulse;
    v.afterpulse_increase.threshold = threshold;
    v.afterpulse_increase.alarm = live.afterpulse_metric > threshold;
    v.afterpulse_increase.detail = "afterpulse " + format_prob(live.afterpulse_metric) +
                                   " vs ceiling " + format_prob(threshold);

    // Afterpulse decrease (suppression): only meaningful when the
    // clean level is itself measurable.
    const bool decrease_active = baseline.nominal_afterpulse >= baseline.decrease_floor;
    const double decrease_threshold =
        baseline.nominal_afterpulse * (1.0 - baseline.decrease_band);
    v.afterpulse_decrease.observed = live.afterpulse_metric;
    v.afterpulse_decrease.reference = baseline.nominal_afterpulse;
    v.afterpulse_decrease.threshold = decrease_active ? decrease_threshold : 0.0;
    v.afterpulse_decrease.alarm =
        decrease_active && live.afterpulse_metric < decrease_threshold;
    v.afterpulse_decrease.detail =
        decrease_active ? "afterpulse " + format_prob(live.afterpulse_metric) + " vs floor " +
                              format_prob(decrease_threshold)
                        : "suppression check off (clean level below floor)";

    // Efficiency through the identifiable quantity: per-unit detection
    // rate implied by the tail slope.
    const double nominal_rate = 1.0 - baseline.nominal.q_total;
    const double observed_rate = 1.0 - live.estimate.q_total;
    v.efficiency.observed = observed_rate;
    v.efficiency.reference = nominal_rate;
    v.efficiency.threshold = baseline.efficiency_rel_tol;
    v.efficiency.alarm =
        std::abs(observed_rate - nominal_rate) > baseline.efficiency_rel_tol * nominal_rate;
    v.efficiency.detail = "rate " + format_prob(observed_rate) + " vs nominal " +
                          format_prob(nominal_rate);

    v.deadtime.observed = static_cast<double>(live.estimate.deadtime_units);
    v.deadtime.reference = static_cast<double>(baseline.nominal_deadtime_units);
    v.deadtime.threshold = 0.0;
    v.deadtime.alarm = live.estimate.deadtime_units != baseline.nominal_deadtime_units;
    v.deadtime.detail = "deadtime " + std::to_string(live.estimate.deadtime_units) +
                        " units vs nominal " + std::to_string(baseline.nominal_deadtime_units);

    if (timing != nullptr && !timing->inconclusive) {
        v.timing_evaluated = true;
        v.timing.alarm = timing->alarm;
        std::size_t max_peaks = 0;
        for (const TimingWindow& w : timing->windows)
            max_peaks = std::max(max_peaks, w.peaks.size());
        v.timing.observed = static_cast<double>(max_peaks);
        v.timing.reference = 1.0;
        v.timing.threshold = static_cast<double>(baseline.offset_jitter_samples);
        v.timing.detail = "up to " + std::to_string(max_peaks) + " peaks per period over " +
                          std::to_string(timing->windows.size()) + " windows";
    } else {
        v.timing.detail = timing == nullptr ? "timing analysis not run"
                                            : "timing analysis inconclusive";
    }

    return v;
}

std::vector<HopStep> hop_schedule(const std::vector<DetectorParams>& options,
                                  std::uint64_t mean_dwell, std::uint64_t n_steps,
                                  std::uint64_t seed) {
    if (options.size() < 2)
        throw std::invalid_argument("parameter hopping needs at least two operating points");
    require(mean_dwell >= 1, "mean_dwell must be at least 1");

    Rng rng(seed);
    std::vector<HopStep> schedule;
    schedule.reserve(n_steps);
    std::size_t current = 0;
    std::uint64_t t = 0;
    const double p = 1.0 / static_cast<double>(mean_dwell);
    for (std::uint64_t i = 0; i < n_steps; ++i) {
        HopStep step;
        step.switch_time = t;
        step.option_index = current;
        step.params = options[current];
        schedule.push_back(step);

        std::uint64_t dwell = 1;
        if (mean_dwell > 1) {
            const double u = rng.uniform();
            dwell = 1 + static_cast<std::uint64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
        }
        t += dwell;
        current = (current + 1 + rng.next() % (options.size() - 1)) % options.size();
    }
    return schedule;
}

}  // namespace spadmon
