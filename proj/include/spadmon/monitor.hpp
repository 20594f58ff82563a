#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spadmon/detector.hpp"
#include "spadmon/estimate.hpp"
#include "spadmon/histogram.hpp"

namespace spadmon {

// Nominal operating point plus the tolerances the monitor enforces.
// All thresholds are engineering choices; the defaults suit a gated
// detector with a few-gate deadtime and are overridden per
// configuration when a baseline is built from a clean calibration run.
struct Baseline {
    ParameterEstimate nominal;

    double nominal_afterpulse = 0.0;          // clean-run afterpulse metric
    double afterpulse_alarm_threshold = 0.005;  // absolute ceiling
    double afterpulse_noise_scale = 0.0;  // metric std at reference_n; 0 disables
    std::uint64_t reference_n = 0;        // detections behind noise_scale
    double alarm_z = 3.0;                 // sigmas added on top of nominal

    double decrease_band = 0.25;   // fractional drop flagged as suppression
    double decrease_floor = 0.01;  // nominal below this: decrease check off

    double efficiency_rel_tol = 0.10;  // on the per-gate detection rate

    std::int64_t nominal_deadtime_units = 0;

    std::int64_t expected_offset_samples = 0;  // sub-gate peak position
    std::uint64_t offset_jitter_samples = 1;
    double min_peak_fraction = 0.05;  // of window mass, for peak detection

    std::uint64_t min_samples = 1000;  // refuse verdicts on fewer detections

    void validate() const;
};

// Builds a Baseline from a clean calibration run. The alarm threshold
// is max(0.5% absolute, twice the measured clean level), which keeps
// the ceiling above the nominal point for configurations that run
// without deadtime and therefore sit at a few percent natively.
// noise_scale and reference_n arm the sample-size-aware margin; leave
// them zero to alarm on the absolute threshold alone.
Baseline make_baseline(const Characterization& clean, double noise_scale = 0.0,
                       std::uint64_t reference_n = 0);

// One monitored quantity: what was seen, what was expected, and the
// bound that was actually applied.
struct AlarmCheck {
    bool alarm = false;
    double observed = 0.0;
    double reference = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct TimingPeak {
    std::int64_t offset = 0;  // relative to the window's period multiple
    std::uint64_t height = 0;
};

struct TimingWindow {
    std::uint64_t period_index = 0;  // k for the window around k * period
    std::uint64_t mass = 0;
    std::vector<TimingPeak> peaks;
};

struct TimingReport {
    std::vector<TimingWindow> windows;  // windows with enough counts to judge
    bool inconclusive = false;          // no window reached the count floor
    bool alarm = false;
    double central_to_side_ratio = 0.0;  // NaN when no window shows side peaks
};

// Scans the sample-unit interval histogram around each multiple of the
// period. A healthy synchronously gated detector concentrates each
// window's mass in one peak at the expected sub-gate offset; extra
// peaks or a displaced peak raise the alarm. Windows with fewer than
// 100 counts are not judged; if none qualifies the report is
// inconclusive and carries no alarm.
TimingReport detect_timing_peaks(const IntervalHistogram& h, std::uint64_t period_samples,
                                 double min_peak_fraction,
                                 std::int64_t expected_offset_samples = 0,
                                 std::uint64_t offset_jitter_samples = 1);

struct Verdict {
    AlarmCheck afterpulse_increase;
    AlarmCheck afterpulse_decrease;
    AlarmCheck efficiency;
    AlarmCheck deadtime;
    AlarmCheck timing;
    bool timing_evaluated = false;

    bool afterpulse_alarm() const {
        return afterpulse_increase.alarm || afterpulse_decrease.alarm;
    }
    bool efficiency_alarm() const { return efficiency.alarm; }
    bool deadtime_alarm() const { return deadtime.alarm; }
    bool timing_alarm() const { return timing.alarm; }
    bool overall() const {
        return afterpulse_alarm() || efficiency_alarm() || deadtime_alarm() || timing_alarm();
    }
};

// Evaluates one characterized run against the baseline. The timing
// report is optional; pass it only for sample-unit analyses. The
// afterpulse ceiling widens for short runs: estimator noise scales as
// 1/sqrt(n), so the margin grows by sqrt(reference_n / n) to keep the
// false-alarm rate flat across run lengths.
Verdict compare(const Baseline& baseline, const Characterization& live,
                const TimingReport* timing = nullptr);

// One dwell of the parameter-hopping countermeasure: hold options
// [option_index] starting at estimate number switch_time.
struct HopStep {
    std::uint64_t switch_time = 0;  // index of the first estimate in this dwell
    std::size_t option_index = 0;
    DetectorParams params;
};

// Random hopping schedule over the given operating points: dwell times
// are geometric with the given mean (in estimates), and each hop moves
// to a different option chosen uniformly. Deterministic per seed. An
// attacker replaying one fixed statistic goes out of sync within a
// dwell or two; the honest detector tracks every hop by construction.
std::vector<HopStep> hop_schedule(const std::vector<DetectorParams>& options,
                                  std::uint64_t mean_dwell, std::uint64_t n_steps,
                                  std::uint64_t seed);

}  // namespace spadmon
