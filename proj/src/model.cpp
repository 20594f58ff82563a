#include "spadmon/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace spadmon {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

}  // namespace

void DetectorParams::validate() const {
    require(mu >= 0.0 && std::isfinite(mu), "mu must be finite and >= 0");
    require(eta >= 0.0 && eta <= 1.0, "eta must be in [0, 1]");
    require(p_dark >= 0.0 && p_dark < 1.0, "p_dark must be in [0, 1)");
    require(p0 >= 0.0 && p0 <= 1.0, "p0 must be in [0, 1]");
    require(tau_trap_s > 0.0 && std::isfinite(tau_trap_s), "tau_trap_s must be positive");
    require(gate_period_s > 0.0 && std::isfinite(gate_period_s), "gate_period_s must be positive");
    require(sample_period_s > 0.0 && std::isfinite(sample_period_s),
            "sample_period_s must be positive");
    // Sub-gate timestamps are sample indices, so the gate must hold a whole
    // number of samples.
    const double ratio = gate_period_s / sample_period_s;
    const double rounded = std::round(ratio);
    require(rounded >= 1.0 && std::abs(ratio - rounded) <= 1e-6 * ratio,
            "gate_period_s must be an integer multiple of sample_period_s");
}

double DetectorParams::photon_miss() const {
    return std::exp(-mu * eta);
}

double DetectorParams::survival() const {
    return photon_miss() * (1.0 - p_dark);
}

std::uint64_t DetectorParams::samples_per_gate() const {
    return static_cast<std::uint64_t>(std::round(gate_period_s / sample_period_s));
}

double zero_photon_probability(const DetectorParams& p) {
    return p.survival();
}

double afterpulse_at(const DetectorParams& p, std::uint64_t k) {
    if (k < 1) throw std::domain_error("afterpulse hazard starts one gate after the avalanche");
    return p.p0 * std::exp(-static_cast<double>(k) * p.gate_period_s / p.tau_trap_s);
}

double total_afterpulse(const DetectorParams& p) {
    return p.p0 / std::expm1(p.gate_period_s / p.tau_trap_s);
}

double interval_pmf_exact(std::uint64_t m, const DetectorParams& p) {
    const std::uint64_t d = p.deadtime_gates;
    if (m <= d) return 0.0;
    const double s = p.survival();
    const double x = std::exp(-p.gate_period_s / p.tau_trap_s);
    // Hazard at the first live gate; the detrapping clock keeps running
    // while the detector sits in deadtime.
    double amp = p.p0 * pow_int(x, d + 1);
    double live_product = 1.0;
    for (std::uint64_t k = d + 1; k < m; ++k) {
        live_product *= s * (1.0 - amp);
        amp *= x;
    }
    const double click = 1.0 - s * (1.0 - amp);
    return click * live_product;
}

std::vector<double> interval_pmf_exact_prefix(std::uint64_t n_max, const DetectorParams& p) {
    std::vector<double> pmf(n_max, 0.0);
    const std::uint64_t d = p.deadtime_gates;
    const double s = p.survival();
    const double x = std::exp(-p.gate_period_s / p.tau_trap_s);
    double amp = p.p0 * pow_int(x, d + 1);
    double live_product = 1.0;
    for (std::uint64_t m = d + 1; m <= n_max; ++m) {
        pmf[m - 1] = (1.0 - s * (1.0 - amp)) * live_product;
        live_product *= s * (1.0 - amp);
        amp *= x;
    }
    return pmf;
}

void IntervalModelParams::validate() const {
    require(q_total > 0.0 && q_total < 1.0, "q_total must be in (0, 1)");
    require(p0 >= 0.0 && p0 <= 1.0, "p0 must be in [0, 1]");
    require(decay > 0.0 && decay < 1.0, "decay must be in (0, 1)");
}

namespace {

// Shared closed-form evaluation. When clamp is false a negative
// correction bracket throws; when true it returns 0.
double model_pmf_core(std::uint64_t m, const IntervalModelParams& p, bool clamp) {
    const std::uint64_t d = p.deadtime_gates;
    if (m <= d) return 0.0;
    const double q = p.q_total;
    const double x = p.decay;
    const double xm = pow_int(x, m);
    const double click = 1.0 - q * (1.0 - p.p0 * xm);
    const double geom = pow_int(q, m - 1 - d);
    if (p.p0 <= 0.0) return click * geom;
    const double alpha = p.p0 * pow_int(x, d + 1) / (1.0 - x);
    const double beta = p.p0 * xm / (1.0 - x);
    const double bracket = 1.0 - alpha + beta;
    if (bracket < 0.0) {
        if (clamp) return 0.0;
        throw std::domain_error(
            "interval model invalid: afterpulse correction bracket is negative at interval " +
            std::to_string(m));
    }
    return click * geom * bracket;
}

}  // namespace

double interval_pmf_model(std::uint64_t m, const IntervalModelParams& p) {
    return model_pmf_core(m, p, false);
}

double interval_pmf_model_clamped(std::uint64_t m, const IntervalModelParams& p) {
    return model_pmf_core(m, p, true);
}

double total_afterpulse_model(const IntervalModelParams& p) {
    // Geometric-series sum of the hazard: p0 * x / (1 - x) with x = decay.
    return p.p0 * p.decay / (1.0 - p.decay);
}

double interval_pmf_model_mass(const IntervalModelParams& p) {
    if (p.p0 <= 0.0) return 1.0;  // pure geometric backbone
    const double q = p.q_total;
    const double x = p.decay;
    const double xd1 = pow_int(x, p.deadtime_gates + 1);
    const double k = p.p0 / (1.0 - x);
    const double alpha = k * xd1;
    // Sum of click * q^(m-1-d) * bracket over m > d, split by powers of
    // x^m: the constant, x^m, and x^(2m) parts each telescope.
    return (1.0 - alpha) +
           ((1.0 - q) * k + q * p.p0 * (1.0 - alpha)) * xd1 / (1.0 - q * x) +
           q * p.p0 * k * xd1 * xd1 / (1.0 - q * x * x);
}

double binary_entropy_bits(double prob) {
    if (prob < 0.0 || prob > 1.0) throw std::domain_error("entropy argument outside [0, 1]");
    if (prob == 0.0 || prob == 1.0) return 0.0;
    return -(prob * std::log2(prob) + (1.0 - prob) * std::log2(1.0 - prob));
}

double mutual_information_timeshift(double ratio) {
    if (ratio < 0.0 || ratio > 1.0) throw std::domain_error("detection ratio outside [0, 1]");
    return 1.0 - binary_entropy_bits(ratio / (1.0 + ratio));
}

}  // namespace spadmon
