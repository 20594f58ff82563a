#pragma once

#include <cstdint>
#include <vector>

#include "spadmon/detector.hpp"

namespace spadmon {

// x^n for non-negative integer n by repeated squaring. Used instead of
// std::pow so results are bit-identical across libm implementations.
inline double pow_int(double x, std::uint64_t n) {
    double result = 1.0;
    double base = x;
    while (n > 0) {
        if (n & 1) result *= base;
        base *= base;
        n >>= 1;
    }
    return result;
}

// Probability a live gate produces no avalanche from photons or dark
// counts: exp(-mu*eta) * (1 - p_dark).
double zero_photon_probability(const DetectorParams& p);

// Afterpulse hazard k gates after an avalanche: p0 * exp(-k*T/tau).
// k counts from 1 (the gate right after the avalanche). Throws
// std::domain_error for k < 1.
double afterpulse_at(const DetectorParams& p, std::uint64_t k);

// Expected total afterpulses per avalanche summed over all later gates,
// ignoring deadtime: p0 / (exp(T/tau) - 1).
double total_afterpulse(const DetectorParams& p);

// Exact inter-detection interval pmf P(m): probability the next avalanche
// lands exactly m gates after the previous one. Zero for m <= deadtime.
double interval_pmf_exact(std::uint64_t m, const DetectorParams& p);

// P(1..n_max) in one sweep, reusing the running survival product. Entry
// [0] is P(1). Matches interval_pmf_exact to rounding.
std::vector<double> interval_pmf_exact_prefix(std::uint64_t n_max, const DetectorParams& p);

// Parameters of the closed-form interval model fitted to histograms.
// decay is x = exp(-T/tau); q_total is the per-gate survival including
// all static (non-afterpulse) click sources.
struct IntervalModelParams {
    double q_total = 0.9;
    double p0 = 0.0;
    double decay = 0.5;
    std::uint64_t deadtime_gates = 0;

    void validate() const;  // throws std::invalid_argument
};

// Closed-form interval pmf. Throws std::domain_error when the correction
// bracket goes negative, which marks parameters outside the model's
// validity region (afterpulsing too strong for the geometric backbone).
double interval_pmf_model(std::uint64_t m, const IntervalModelParams& p);

// Same formula but returns 0 instead of throwing on a negative bracket.
// For optimizer internals that probe invalid corners during line search.
double interval_pmf_model_clamped(std::uint64_t m, const IntervalModelParams& p);

// Total mass of the model pmf over all intervals, in closed form (the
// pmf splits into three geometric series). The first-order afterpulse
// correction keeps the sum slightly below one, so fitting the model to
// a normalized histogram as-is would bias every parameter by that
// deficit; dividing by this mass compares shapes instead. Exact while
// the correction bracket stays nonnegative over the whole range.
double interval_pmf_model_mass(const IntervalModelParams& p);

// Total afterpulse probability implied by the fitted model parameters.
double total_afterpulse_model(const IntervalModelParams& p);

// Binary entropy in bits; 0 at the endpoints, throws outside [0, 1].
double binary_entropy_bits(double prob);

// Mutual information (bits) leaked to an eavesdropper who delays a
// fraction r/(1+r) of pulses in a timing side channel with detection
// ratio r in [0, 1]: 1 - H2(r / (1 + r)).
double mutual_information_timeshift(double ratio);

}  // namespace spadmon
