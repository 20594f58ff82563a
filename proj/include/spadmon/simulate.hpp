#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "spadmon/detector.hpp"
#include "spadmon/events.hpp"

namespace spadmon {

struct NoAttack {};

// Bright pulses arriving just after the gate. A matched-basis pulse
// forces a deterministic click; a mismatched one dumps charge into the
// traps without firing an avalanche.
struct AfterGateAttack {
    double fraction_attacked = 1.0;     // f: share of pulses Eve intercepts
    double eve_efficiency = 0.15;       // Eve's detector efficiency
    double basis_match_prob = 0.5;
    double subthreshold_seed = 0.15;    // trap amplitude left by a mismatched pulse
    double forced_seed = 0.95;          // trap amplitude left by a forced avalanche
    std::uint32_t pulse_offset_samples = 255;  // forced-click timestamp, past gate end
    double rate_compensation = 0.0;     // >= 1, or 0 = auto to match the clean click rate
};

// Faint end-of-gate pulses exploiting the superlinear gate edge: two
// click probabilities selected by Eve's basis agreement, and weaker
// trap seeding from the small end-of-gate avalanches.
struct FaintAfterGateAttack {
    double eta_match = 0.006491;
    double eta_mismatch = 0.001509;
    double seed_factor = 0.55;  // scales p0 for end-of-gate avalanches
};

// Random per-gate delay sampling two points of the gate efficiency
// profile; delayed arrivals land delay_samples later.
struct TimeShiftAttack {
    std::uint32_t delay_samples = 6;
    double delay_prob = 0.5;
    double eta_early = 0.15;
    double eta_late = 0.075;
};

// Continuous-wave blinding, visible as a stretched minimum interval on
// a free-running detector.
struct CwBlindingAttack {
    double enforced_gap_s = 500e-9;  // replaces the native deadtime, must exceed it
};

using AttackScenario =
    std::variant<NoAttack, AfterGateAttack, FaintAfterGateAttack, TimeShiftAttack,
                 CwBlindingAttack>;

// Throws std::invalid_argument on out-of-range scenario fields or a
// scenario/mode mismatch (CW blinding is free-running only).
void validate_gated_scenario(const AttackScenario& scenario, const DetectorParams& params);

struct SimulateOptions {
    // Gate budget before declaring the configuration event-starved.
    // 0 picks max(1e7, n_detections * 1e6).
    std::uint64_t max_gates = 0;
};

// Deterministic gated Monte Carlo: returns exactly n_detections events,
// bit-identical for identical (params, scenario, seed).
std::vector<DetectionEvent> simulate_gated(const DetectorParams& params,
                                           const AttackScenario& scenario,
                                           std::uint64_t n_detections, std::uint64_t seed,
                                           const SimulateOptions& options = {});

struct FreeRunningParams {
    double count_rate_hz = 1e5;
    double deadtime_s = 40e-9;      // non-paralyzable
    double sample_period_s = 10e-9;
    double duration_s = 0.1;

    void validate() const;
};

// Homogeneous Poisson arrivals thinned by non-paralyzable deadtime
// (stretched to the enforced gap under CW blinding), timestamped at
// A/D sample resolution. Events use gate_index as the absolute sample.
std::vector<DetectionEvent> simulate_free_running(const FreeRunningParams& params,
                                                  const AttackScenario& scenario,
                                                  std::uint64_t seed);

// The auto value used when AfterGateAttack::rate_compensation is 0:
// scales Eve's firing rate so forced clicks replace the clean rate.
double auto_rate_compensation(const DetectorParams& params, const AfterGateAttack& attack);

}  // namespace spadmon
