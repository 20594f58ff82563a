#include "spadmon/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "spadmon/errors.hpp"
#include "spadmon/rng.hpp"

namespace spadmon {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

void check_prob(double value, const char* name) {
    require(value >= 0.0 && value <= 1.0, std::string(name) + " must be in [0, 1]");
}

}  // namespace

double auto_rate_compensation(const DetectorParams& params, const AfterGateAttack& attack) {
    const double clean_rate = 1.0 - params.photon_miss();
    const double eve_rate =
        attack.basis_match_prob * (1.0 - std::exp(-params.mu * attack.eve_efficiency));
    if (eve_rate <= 0.0)
        throw std::invalid_argument("after-gate attack cannot fire: eve_efficiency or "
                                    "basis_match_prob is zero");
    return clean_rate / eve_rate;
}

void validate_gated_scenario(const AttackScenario& scenario, const DetectorParams& params) {
    if (const auto* a = std::get_if<AfterGateAttack>(&scenario)) {
        check_prob(a->fraction_attacked, "fraction_attacked");
        check_prob(a->eve_efficiency, "eve_efficiency");
        check_prob(a->basis_match_prob, "basis_match_prob");
        require(a->subthreshold_seed >= 0.0 && a->subthreshold_seed < 1.0,
                "subthreshold_seed must be in [0, 1)");
        require(a->forced_seed >= 0.0 && a->forced_seed < 1.0, "forced_seed must be in [0, 1)");
        require(a->pulse_offset_samples >= params.samples_per_gate(),
                "pulse_offset_samples must land after the gate end");
        require(a->rate_compensation == 0.0 || a->rate_compensation >= 1.0,
                "rate_compensation must be >= 1 (or 0 for auto)");
    } else if (const auto* fa = std::get_if<FaintAfterGateAttack>(&scenario)) {
        check_prob(fa->eta_match, "eta_match");
        check_prob(fa->eta_mismatch, "eta_mismatch");
        require(fa->eta_match > fa->eta_mismatch, "eta_match must exceed eta_mismatch");
        check_prob(fa->seed_factor, "seed_factor");
    } else if (const auto* ts = std::get_if<TimeShiftAttack>(&scenario)) {
        require(ts->delay_samples >= 1, "delay_samples must be at least 1");
        check_prob(ts->delay_prob, "delay_prob");
        check_prob(ts->eta_early, "eta_early");
        check_prob(ts->eta_late, "eta_late");
    } else if (std::holds_alternative<CwBlindingAttack>(scenario)) {
        throw std::invalid_argument("CW blinding applies to free-running operation only");
    }
}

std::vector<DetectionEvent> simulate_gated(const DetectorParams& params,
                                           const AttackScenario& scenario,
                                           std::uint64_t n_detections, std::uint64_t seed,
                                           const SimulateOptions& options) {
    params.validate();
    validate_gated_scenario(scenario, params);
    require(n_detections >= 1, "n_detections must be at least 1");

    const std::uint64_t budget =
        options.max_gates > 0
            ? options.max_gates
            : std::max<std::uint64_t>(10'000'000, n_detections * 1'000'000);

    Rng rng(seed);
    const double x = std::exp(-params.gate_period_s / params.tau_trap_s);
    const double p_photon = 1.0 - params.photon_miss();
    const double p_dark = params.p_dark;
    const std::uint64_t d = params.deadtime_gates;

    // Scenario-specific precomputation.
    const auto* after_gate = std::get_if<AfterGateAttack>(&scenario);
    const auto* faint = std::get_if<FaintAfterGateAttack>(&scenario);
    const auto* time_shift = std::get_if<TimeShiftAttack>(&scenario);
    double p_eve_fire = 0.0;
    if (after_gate) {
        const double rc = after_gate->rate_compensation > 0.0
                              ? after_gate->rate_compensation
                              : auto_rate_compensation(params, *after_gate);
        p_eve_fire =
            std::min(1.0, rc * (1.0 - std::exp(-params.mu * after_gate->eve_efficiency)));
    }
    double p_faint_match = 0.0;
    double p_faint_mismatch = 0.0;
    if (faint) {
        p_faint_match = 1.0 - std::exp(-params.mu * faint->eta_match);
        p_faint_mismatch = 1.0 - std::exp(-params.mu * faint->eta_mismatch);
    }
    double p_early = 0.0;
    double p_late = 0.0;
    if (time_shift) {
        p_early = 1.0 - std::exp(-params.mu * time_shift->eta_early);
        p_late = 1.0 - std::exp(-params.mu * time_shift->eta_late);
    }
    const std::uint32_t gate_end_sample =
        static_cast<std::uint32_t>(params.samples_per_gate() - 1);

    std::vector<DetectionEvent> events;
    events.reserve(n_detections);

    double hazard = 0.0;          // afterpulse hazard at the current gate
    std::uint64_t dead_until = 0; // gates below this index are blanked

    for (std::uint64_t g = 0; events.size() < n_detections; ++g) {
        if (g >= budget)
            throw std::runtime_error(
                "gate budget exhausted after " + std::to_string(budget) + " gates with " +
                std::to_string(events.size()) + " of " + std::to_string(n_detections) +
                " detections; the configuration has no sufficient event source");

        const double gate_hazard = hazard;
        hazard *= x;  // detrapping continues whether or not the gate is live

        if (g < dead_until) continue;

        bool clicked = false;
        auto click = [&](EventCause cause, std::uint32_t sub_sample, double amplitude) {
            events.push_back({g, sub_sample, cause});
            hazard = amplitude * x;
            dead_until = g + 1 + d;
            clicked = true;
        };

        // Scenario routing first: a gate yields at most one count, and
        // the optical path gets first claim on it.
        if (after_gate) {
            if (after_gate->fraction_attacked > 0.0 &&
                rng.bernoulli(after_gate->fraction_attacked)) {
                if (p_eve_fire > 0.0 && rng.bernoulli(p_eve_fire)) {
                    if (rng.bernoulli(after_gate->basis_match_prob)) {
                        click(EventCause::forced_click, after_gate->pulse_offset_samples,
                              after_gate->forced_seed);
                    } else {
                        // Sub-threshold bright pulse: traps refill, no count.
                        hazard = after_gate->subthreshold_seed * x;
                    }
                }
            } else if (p_photon > 0.0 && rng.bernoulli(p_photon)) {
                click(EventCause::photon, 0, params.p0);
            }
        } else if (faint) {
            const bool basis_match = rng.bernoulli(0.5);
            const double p = basis_match ? p_faint_match : p_faint_mismatch;
            if (p > 0.0 && rng.bernoulli(p))
                click(EventCause::photon, gate_end_sample, faint->seed_factor * params.p0);
        } else if (time_shift) {
            const bool delayed = rng.bernoulli(time_shift->delay_prob);
            const double p = delayed ? p_late : p_early;
            if (p > 0.0 && rng.bernoulli(p))
                click(EventCause::photon, delayed ? time_shift->delay_samples : 0, params.p0);
        } else {
            if (p_photon > 0.0 && rng.bernoulli(p_photon))
                click(EventCause::photon, 0, params.p0);
        }

        if (!clicked && p_dark > 0.0 && rng.bernoulli(p_dark))
            click(EventCause::dark, 0, params.p0);
        if (!clicked && gate_hazard > 0.0 && rng.bernoulli(gate_hazard))
            click(EventCause::afterpulse, 0, params.p0);
    }
    return events;
}

void FreeRunningParams::validate() const {
    require(count_rate_hz > 0.0 && std::isfinite(count_rate_hz),
            "count_rate_hz must be positive");
    require(deadtime_s >= 0.0 && std::isfinite(deadtime_s), "deadtime_s must be >= 0");
    require(sample_period_s > 0.0, "sample_period_s must be positive");
    require(duration_s > 0.0, "duration_s must be positive");
}

std::vector<DetectionEvent> simulate_free_running(const FreeRunningParams& params,
                                                  const AttackScenario& scenario,
                                                  std::uint64_t seed) {
    params.validate();
    double gap = params.deadtime_s;
    if (const auto* cw = std::get_if<CwBlindingAttack>(&scenario)) {
        require(cw->enforced_gap_s > params.deadtime_s,
                "enforced_gap_s must exceed the native deadtime");
        gap = cw->enforced_gap_s;
    } else if (!std::holds_alternative<NoAttack>(scenario)) {
        throw std::invalid_argument("free-running mode supports only CW blinding or no attack");
    }

    Rng rng(seed);
    std::vector<DetectionEvent> events;
    double t = 0.0;
    double release = 0.0;     // earliest time the next count can register
    std::uint64_t last_sample = 0;
    bool have_last = false;

    while (true) {
        t += rng.exponential(params.count_rate_hz);
        if (t > params.duration_s) break;
        if (t < release) continue;  // dropped arrival; deadtime does not restart
        release = t + gap;
        const auto sample = static_cast<std::uint64_t>(t / params.sample_period_s);
        // Counts landing in an already-occupied sample are unresolvable
        // at the A/D and merge into the existing one.
        if (have_last && sample == last_sample) continue;
        events.push_back({sample, 0, EventCause::photon});
        last_sample = sample;
        have_last = true;
    }
    if (events.size() < 2)
        throw InsufficientDataError("free-running capture produced fewer than 2 events; "
                                    "increase duration_s or count_rate_hz");
    return events;
}

}  // namespace spadmon
