#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "spadmon/events.hpp"
#include "spadmon/histogram.hpp"

namespace spadmon {

// Straight line fitted to the logarithm of the interval PMF tail:
// ln pmf(m) ~ intercept + slope * m over bins [fit_begin, fit_end].
struct TailLine {
    double slope = 0.0;
    double intercept = 0.0;
    std::uint64_t fit_begin = 0;
    std::uint64_t fit_end = 0;

    double log_value_at(std::uint64_t m) const {
        return intercept + slope * static_cast<double>(m);
    }
};

// Count-weighted line fit on (m, ln pmf) over populated bins from
// tail_start up to the last bin holding at least 5 counts. Counts act
// as weights so near-empty tail bins cannot lever the slope. Requires
// at least 10 populated bins at or beyond tail_start.
TailLine fit_tail_line(const IntervalHistogram& h, std::uint64_t tail_start);

// Total afterpulse probability by the area method: PMF mass above the
// extrapolated tail line, summed from the first live bin, clamped to be
// non-negative, and normalized by the in-range PMF mass.
double tail_line_afterpulse(const IntervalHistogram& h, std::uint64_t tail_start);

// Default tail start: the first bin whose time exceeds ten detrapping
// lifetimes, so the line sees negligible afterpulse contamination.
std::uint64_t default_tail_start(double gate_period_s, double tau_hint_s);

// Largest interval with zero observed counts: (first nonzero bin) - 1.
// Equals the deadtime in the histogram's units for a clean stream.
std::int64_t estimate_deadtime(const IntervalHistogram& h);

struct FitConfig {
    double gate_period_s = 2.5e-6;
    double tau_hint_s = 2.5e-6;   // detrapping lifetime guess for initialization
    std::int64_t deadtime_units = -1;  // negative: take estimate_deadtime(h)
    double p_dark_assumed = -1.0;      // supplied (>= 0) enables the mu_eta report
    double weight_floor = 1e-9;
    double sse_rel_tol = 1e-9;
    int max_iterations = 200;
    std::uint64_t min_total = 1000;

    // In (0, 1): pin the per-gate trap decay to this value and fit only the
    // survival and amplitude. Used when the lifetime is already known from
    // characterization and the live data is too thin to determine it.
    double fixed_decay = -1.0;
};

struct ParameterEstimate {
    double q_total = 0.0;        // per-gate survival against photons + dark counts
    double mu_eta = 0.0;         // -ln(q_total/(1 - p_dark_assumed)); NaN if dark unknown
    double p_dark_assumed = 0.0; // NaN when not supplied
    double p0_hat = 0.0;         // afterpulse amplitude; NaN when not fitted
    double tau_hat_s = 0.0;      // detrapping lifetime; NaN when not fitted
    double gate_period_s = 0.0;
    std::int64_t deadtime_units = 0;
    double r_squared = 0.0;
    std::uint64_t n_samples = 0;

    // Total afterpulse probability implied by (p0_hat, tau_hat):
    // p0 / (exp(T/tau) - 1). Recomputed on demand, never stored.
    double p_after() const;

    // Same sum restricted to gates the deadtime leaves observable.
    double observable_afterpulse() const;
};

struct FitResult {
    ParameterEstimate estimate;
    bool converged = false;
    int iterations = 0;
    double final_sse = 0.0;
    std::vector<double> sse_trace;  // accepted iterates; non-increasing
};

// Weighted least-squares fit of the closed-form interval model with
// free (q_total, p0, tau). Non-convergence is reported through the
// result, not thrown; data starvation throws InsufficientDataError.
FitResult fit_interval_model(const IntervalHistogram& h, const FitConfig& config);

// Relative standard deviation (std/mean) of an extractor applied to
// n_series disjoint consecutive segments of series_length detections.
double resampling_uncertainty(const std::vector<DetectionEvent>& events,
                              std::uint64_t series_length, std::uint64_t n_series,
                              const std::function<double(const IntervalHistogram&)>& extractor,
                              IntervalUnit unit = IntervalUnit::gates,
                              std::size_t n_bins = 4096);

struct CharacterizeConfig {
    FitConfig fit;
    std::uint64_t tail_start = 0;  // 0: default_tail_start(gate_period, tau_hint)
    double fit_health_r2 = 0.98;   // below this the model fit is not trusted
};

// Full analysis of one histogram: model fit when it is trustworthy,
// tail-line fallback otherwise (bright-pulse attacks make the model
// intractable, but the tail still yields q_total and the afterpulse
// area). afterpulse_metric is the monitored quantity: the afterpulse
// probability observable past the deadtime. A free fit whose lifetime
// lands away from the configured constant could not measure the trap
// arm; it is refit with the decay pinned to tau_hint_s, which keeps the
// amplitude reading sharp on quiet data. fit_healthy means a fit (free
// or pinned) supplied the metric; when even that fails the result keeps
// q_total and mu_eta, returns NaN trap parameters, and reports the
// tail-line area instead.
struct Characterization {
    ParameterEstimate estimate;
    bool fit_attempted = false;
    bool fit_converged = false;
    bool fit_healthy = false;
    int fit_iterations = 0;
    double fit_r_squared = 0.0;
    double tail_line_p_after = 0.0;
    double afterpulse_metric = 0.0;
    std::uint64_t tail_start = 0;
};

Characterization characterize(const IntervalHistogram& h, const CharacterizeConfig& config);

}  // namespace spadmon
