#pragma once

#include <cstdint>

namespace spadmon {

// Physical and operational description of one gated SPAD together with
// the source driving it. Times are in seconds, probabilities per gate.
struct DetectorParams {
    double mu = 0.4;                   // mean photons per pulse
    double eta = 0.15;                 // overall detection efficiency
    double p_dark = 0.0;               // dark count probability per gate
    double p0 = 0.0;                   // afterpulse amplitude right after an avalanche
    double tau_trap_s = 2.5e-6;        // trap detrapping lifetime
    double gate_period_s = 2.5e-6;     // gate repetition period T
    std::uint64_t deadtime_gates = 0;  // gates blanked after each avalanche
    double sample_period_s = 1e-8;     // A/D sample spacing for sub-gate timestamps

    // Throws std::invalid_argument naming the offending field.
    void validate() const;

    // Probability that the optical pulse yields no photoelectron.
    double photon_miss() const;

    // Probability a live gate passes with neither photon nor dark count.
    double survival() const;

    // A/D samples per gate period (validated to be an integer ratio).
    std::uint64_t samples_per_gate() const;
};

}  // namespace spadmon
