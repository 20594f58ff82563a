#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spadmon/detector.hpp"
#include "spadmon/estimate.hpp"
#include "spadmon/monitor.hpp"
#include "spadmon/simulate.hpp"

namespace spadmon {

enum class RunMode { gated, free_running };

// Estimator settings for one run. Unset numeric fields fall back to
// mode-dependent defaults when the config is parsed.
struct AnalysisConfig {
    IntervalUnit unit = IntervalUnit::gates;
    std::size_t n_bins = 4096;
    std::uint64_t tail_start = 0;  // 0: ten lifetimes past the deadtime
    FitConfig fit;
    double fit_health_r2 = 0.98;
    std::uint64_t timing_period_samples = 0;  // > 0 runs the timing scan
    std::size_t timing_n_bins = 0;            // 0: sized for ten periods
};

struct ScenarioConfig {
    std::string name;  // suite member label; empty outside suites
    RunMode mode = RunMode::gated;
    DetectorParams detector;
    FreeRunningParams free_running;
    AttackScenario scenario = NoAttack{};
    std::uint64_t n_detections = 0;
    std::uint64_t seed = 1;
    std::string input_path;  // events or histogram CSV; empty: simulate
    AnalysisConfig analysis;
    std::optional<Baseline> baseline;
};

// Parses the JSON config document. All physical quantities carry SI
// unit suffixes in their field names. Errors name the offending field.
ScenarioConfig parse_scenario_config(const std::string& json_text);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

Baseline parse_baseline_json(const std::string& json_text);
std::string baseline_to_json(const Baseline& baseline);

// JSON object with the estimate's canonical field names, tau_hat and
// p_after included, suitable for embedding in reports.
std::string estimate_json(const ParameterEstimate& estimate);

// Everything one run produces, before any file is written.
struct ScenarioAnalysis {
    IntervalHistogram histogram;  // the characterization histogram
    std::optional<IntervalHistogram> timing_histogram;
    Characterization characterization;
    std::optional<TimingReport> timing;
    std::optional<Verdict> verdict;
    std::vector<DetectionEvent> events;  // empty when the input was a histogram
};

// Simulates (or loads the configured input) and runs the full
// analysis chain: histogram, characterization, optional timing scan,
// optional baseline comparison.
ScenarioAnalysis analyze_scenario(const ScenarioConfig& config);

// Runners behind the CLI subcommands. Each returns the process exit
// code: 0 clean, 2 alarm raised, 1 operational error. Diagnostics go
// to err; machine-readable outputs go to files under out_dir.
int run_simulate(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                 std::ostream& err);
int run_analyze(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                bool fixed_clock, bool require_baseline, std::ostream& err);

// Pass/fail bands a suite member is checked against. Unset bounds are
// not enforced.
struct ExpectedBands {
    std::optional<bool> alarm;
    std::optional<double> afterpulse_min;
    std::optional<double> afterpulse_max;
    std::optional<double> rate_min;
    std::optional<double> rate_max;
    std::optional<double> r_squared_min;
    std::optional<std::int64_t> deadtime_units;
    std::optional<std::size_t> timing_peaks;  // exact count in every window
};

struct SuiteMember {
    std::string name;
    ScenarioConfig config;
    ExpectedBands expected;
};

std::vector<SuiteMember> parse_suite_config(const std::string& json_text,
                                            const std::filesystem::path& base_dir);

// Runs every member, writes per-member reports under out_dir/<name>/,
// prints one summary row per member, and returns 0 only when all
// members pass their bands. Failures and member errors name the
// scenario and return 1.
int run_suite(const std::vector<SuiteMember>& members, const std::filesystem::path& out_dir,
              bool fixed_clock, std::ostream& out, std::ostream& err);

}  // namespace spadmon
