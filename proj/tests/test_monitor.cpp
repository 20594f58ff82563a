#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spadmon/estimate.hpp"
#include "spadmon/histogram.hpp"
#include "spadmon/monitor.hpp"
#include "spadmon/simulate.hpp"

using spadmon::Baseline;
using spadmon::Characterization;
using spadmon::DetectorParams;
using spadmon::IntervalHistogram;
using spadmon::IntervalUnit;
using spadmon::NoAttack;
using spadmon::ParameterEstimate;

namespace {

DetectorParams char_point() {
    DetectorParams p;
    p.mu = 0.4;
    p.eta = 0.15;
    p.p_dark = 1e-4;
    p.p0 = 0.05;
    p.tau_trap_s = 2.5e-6;
    p.gate_period_s = 2.5e-6;
    p.deadtime_gates = 0;
    return p;
}

Characterization characterize_run(const DetectorParams& p, std::uint64_t n,
                                  std::uint64_t seed) {
    const auto events = spadmon::simulate_gated(p, NoAttack{}, n, seed);
    const auto h = spadmon::accumulate(events, IntervalUnit::gates, 2048);
    spadmon::CharacterizeConfig config;
    config.fit.gate_period_s = p.gate_period_s;
    config.fit.tau_hint_s = p.tau_trap_s;
    config.fit.p_dark_assumed = p.p_dark;
    return spadmon::characterize(h, config);
}

// Hand-assembled live view for threshold-logic tests.
Characterization fake_live(double q_total, double metric, std::uint64_t n,
                           std::int64_t deadtime = 4) {
    Characterization c;
    c.estimate.q_total = q_total;
    c.estimate.gate_period_s = 2.5e-6;
    c.estimate.deadtime_units = deadtime;
    c.estimate.n_samples = n;
    c.afterpulse_metric = metric;
    return c;
}

Baseline fake_baseline() {
    Baseline b;
    b.nominal.q_total = 0.94;
    b.nominal.gate_period_s = 2.5e-6;
    b.nominal.deadtime_units = 4;
    b.nominal.n_samples = 200000;
    b.nominal_afterpulse = 0.0005;
    b.afterpulse_alarm_threshold = 0.005;
    b.nominal_deadtime_units = 4;
    return b;
}

// Sample-unit histogram with the given (interval, count) spikes, built
// through the CSV reader.
IntervalHistogram spike_histogram(std::size_t n_bins,
                                  const std::vector<std::pair<std::uint64_t, std::uint64_t>>& spikes) {
    std::vector<std::uint64_t> counts(n_bins + 1, 0);
    for (const auto& s : spikes) counts.at(s.first) = s.second;
    std::ostringstream csv;
    csv << "# unit: samples\n" << "interval,count\n";
    for (std::uint64_t m = 1; m <= n_bins; ++m) csv << m << ',' << counts[m] << '\n';
    csv << "overflow,0\n";
    std::istringstream in(csv.str());
    return IntervalHistogram::read_csv(in);
}

}  // namespace

TEST_CASE("a clean run judged against its own baseline raises nothing") {
    const auto clean = characterize_run(char_point(), 30000, 101);
    REQUIRE(clean.fit_healthy);
    const auto baseline = spadmon::make_baseline(clean);
    CHECK(baseline.afterpulse_alarm_threshold == doctest::Approx(2.0 * clean.afterpulse_metric));
    CHECK(baseline.nominal_deadtime_units == 0);

    const auto verdict = spadmon::compare(baseline, clean);
    CHECK_FALSE(verdict.overall());
    CHECK_FALSE(verdict.timing_evaluated);
    CHECK(verdict.afterpulse_increase.observed == doctest::Approx(clean.afterpulse_metric));
}

TEST_CASE("the afterpulse ceiling widens for short runs") {
    Baseline b = fake_baseline();
    b.afterpulse_noise_scale = 0.001;
    b.reference_n = 200000;
    b.alarm_z = 3.0;

    // At a tenth of the reference length the margin grows by sqrt(10).
    const auto short_run = spadmon::compare(b, fake_live(0.94, 0.008, 20000));
    CHECK_FALSE(short_run.afterpulse_increase.alarm);
    CHECK(short_run.afterpulse_increase.threshold ==
          doctest::Approx(0.0005 + 3.0 * 0.001 * std::sqrt(10.0)));

    const auto full_run = spadmon::compare(b, fake_live(0.94, 0.008, 200000));
    CHECK(full_run.afterpulse_increase.alarm);
    CHECK(full_run.afterpulse_increase.threshold == doctest::Approx(0.005));

    // Without the noise scale the absolute ceiling applies at any n.
    b.afterpulse_noise_scale = 0.0;
    const auto absolute = spadmon::compare(b, fake_live(0.94, 0.008, 20000));
    CHECK(absolute.afterpulse_increase.alarm);
}

TEST_CASE("suppressed afterpulsing is flagged only above the floor") {
    Baseline b = fake_baseline();
    b.nominal_afterpulse = 0.05;
    b.afterpulse_alarm_threshold = 0.1;
    b.decrease_band = 0.25;

    CHECK(spadmon::compare(b, fake_live(0.94, 0.03, 50000)).afterpulse_decrease.alarm);
    CHECK_FALSE(spadmon::compare(b, fake_live(0.94, 0.04, 50000)).afterpulse_decrease.alarm);

    // Near-zero nominal levels leave the decrease check disarmed.
    b.nominal_afterpulse = 0.0005;
    b.afterpulse_alarm_threshold = 0.005;
    CHECK_FALSE(spadmon::compare(b, fake_live(0.94, 0.0, 50000)).afterpulse_decrease.alarm);
}

TEST_CASE("efficiency and deadtime checks compare against the nominal point") {
    const Baseline b = fake_baseline();  // nominal rate 0.06, tolerance 10%

    CHECK(spadmon::compare(b, fake_live(0.952, 0.0005, 50000)).efficiency.alarm);
    CHECK_FALSE(spadmon::compare(b, fake_live(0.943, 0.0005, 50000)).efficiency.alarm);

    CHECK(spadmon::compare(b, fake_live(0.94, 0.0005, 50000, 5)).deadtime.alarm);
    CHECK_FALSE(spadmon::compare(b, fake_live(0.94, 0.0005, 50000, 4)).deadtime.alarm);
}

TEST_CASE("verdicts are refused on starved or mismatched runs") {
    const Baseline b = fake_baseline();
    CHECK_THROWS_AS(spadmon::compare(b, fake_live(0.94, 0.0005, 500)), std::invalid_argument);

    auto live = fake_live(0.94, 0.0005, 50000);
    live.estimate.gate_period_s = 2.0e-6;
    CHECK_THROWS_AS(spadmon::compare(b, live), std::invalid_argument);

    Baseline broken = fake_baseline();
    broken.afterpulse_alarm_threshold = 0.0001;  // below the nominal level
    CHECK_THROWS_AS(spadmon::compare(broken, fake_live(0.94, 0.0005, 50000)),
                    std::invalid_argument);
    broken = fake_baseline();
    broken.nominal.q_total = 0.0;
    CHECK_THROWS_AS(spadmon::compare(broken, fake_live(0.94, 0.0005, 50000)),
                    std::invalid_argument);
}

TEST_CASE("timing scan accepts a single on-time peak per window") {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spikes;
    for (std::uint64_t k = 1; k <= 5; ++k) spikes.emplace_back(k * 1000, 1000);
    const auto h = spike_histogram(5600, spikes);

    const auto report = spadmon::detect_timing_peaks(h, 1000, 0.05, 0, 1);
    CHECK_FALSE(report.inconclusive);
    CHECK_FALSE(report.alarm);
    REQUIRE(report.windows.size() == 5);
    for (const auto& w : report.windows) {
        REQUIRE(w.peaks.size() == 1);
        CHECK(w.peaks[0].offset == 0);
        CHECK(w.mass == 1000);
    }
    CHECK(std::isnan(report.central_to_side_ratio));
}

TEST_CASE("timing scan flags satellite peaks and reports their ratio") {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spikes;
    for (std::uint64_t k = 1; k <= 3; ++k) {
        spikes.emplace_back(k * 1000 - 6, 300);
        spikes.emplace_back(k * 1000, 800);
        spikes.emplace_back(k * 1000 + 6, 290);
    }
    const auto h = spike_histogram(3600, spikes);

    const auto report = spadmon::detect_timing_peaks(h, 1000, 0.05, 0, 1);
    CHECK(report.alarm);
    REQUIRE(report.windows.size() == 3);
    for (const auto& w : report.windows) {
        REQUIRE(w.peaks.size() == 3);
        CHECK(w.peaks.front().offset == -6);
        CHECK(w.peaks.back().offset == 6);
    }
    CHECK(report.central_to_side_ratio == doctest::Approx(800.0 / 300.0));
}

TEST_CASE("timing scan flags a displaced peak and ignores starved windows") {
    const auto displaced = spike_histogram(1600, {{1004, 500}});
    const auto shifted = spadmon::detect_timing_peaks(displaced, 1000, 0.05, 0, 1);
    CHECK(shifted.alarm);
    REQUIRE(shifted.windows.size() == 1);
    CHECK(shifted.windows[0].peaks.at(0).offset == 4);

    // The same displacement within the allowed jitter passes.
    const auto tolerant = spadmon::detect_timing_peaks(displaced, 1000, 0.05, 4, 1);
    CHECK_FALSE(tolerant.alarm);

    const auto starved = spike_histogram(1600, {{1000, 50}});
    const auto report = spadmon::detect_timing_peaks(starved, 1000, 0.05, 0, 1);
    CHECK(report.inconclusive);
    CHECK_FALSE(report.alarm);
    CHECK(report.windows.empty());

    const IntervalHistogram gates(IntervalUnit::gates, 64);
    CHECK_THROWS_AS(spadmon::detect_timing_peaks(gates, 10, 0.05), std::invalid_argument);
}

TEST_CASE("timing verdicts are invariant under a uniform gate shift") {
    DetectorParams p = char_point();
    p.p_dark = 0.0;
    p.p0 = 0.0;
    const auto events = spadmon::simulate_gated(p, spadmon::TimeShiftAttack{}, 20000, 111);

    auto shifted = events;
    for (auto& e : shifted) e.gate_index += 7;

    const auto spg = p.samples_per_gate();
    const auto ha = spadmon::accumulate(events, IntervalUnit::samples, 2000, spg);
    const auto hb = spadmon::accumulate(shifted, IntervalUnit::samples, 2000, spg);
    CHECK(ha == hb);

    const auto ra = spadmon::detect_timing_peaks(ha, spg, 0.05, 0, 1);
    const auto rb = spadmon::detect_timing_peaks(hb, spg, 0.05, 0, 1);
    CHECK(ra.alarm);
    CHECK(ra.alarm == rb.alarm);
    CHECK(ra.inconclusive == rb.inconclusive);
    REQUIRE(ra.windows.size() == rb.windows.size());
    for (std::size_t i = 0; i < ra.windows.size(); ++i) {
        CHECK(ra.windows[i].mass == rb.windows[i].mass);
        REQUIRE(ra.windows[i].peaks.size() == rb.windows[i].peaks.size());
        for (std::size_t j = 0; j < ra.windows[i].peaks.size(); ++j) {
            CHECK(ra.windows[i].peaks[j].offset == rb.windows[i].peaks[j].offset);
            CHECK(ra.windows[i].peaks[j].height == rb.windows[i].peaks[j].height);
        }
    }
}

TEST_CASE("hop schedules are deterministic, alternating, and well formed") {
    std::vector<DetectorParams> options{char_point(), char_point(), char_point()};
    options[1].eta = 0.10;
    options[2].eta = 0.05;

    const auto a = spadmon::hop_schedule(options, 5, 50, 7);
    const auto b = spadmon::hop_schedule(options, 5, 50, 7);
    REQUIRE(a.size() == 50);
    CHECK(a[0].switch_time == 0);
    double total_dwell = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].option_index == b[i].option_index);
        CHECK(a[i].switch_time == b[i].switch_time);
        CHECK(a[i].option_index < options.size());
        CHECK(a[i].params.eta == options[a[i].option_index].eta);
        if (i > 0) {
            CHECK(a[i].option_index != a[i - 1].option_index);
            CHECK(a[i].switch_time > a[i - 1].switch_time);
            total_dwell += static_cast<double>(a[i].switch_time - a[i - 1].switch_time);
        }
    }
    const double mean_dwell = total_dwell / static_cast<double>(a.size() - 1);
    CHECK(mean_dwell > 2.5);
    CHECK(mean_dwell < 8.0);

    CHECK_THROWS_AS(spadmon::hop_schedule({char_point()}, 5, 10, 1), std::invalid_argument);
}

TEST_CASE("hopping exposes an attacker replaying one operating point") {
    std::vector<DetectorParams> options{char_point(), char_point()};
    options[1].eta = 0.10;

    std::vector<Baseline> baselines;
    std::vector<Characterization> cleans;
    for (std::size_t i = 0; i < options.size(); ++i) {
        cleans.push_back(characterize_run(options[i], 30000, 200 + i));
        REQUIRE(cleans.back().fit_healthy);
        baselines.push_back(spadmon::make_baseline(cleans.back()));
    }

    const auto schedule = spadmon::hop_schedule(options, 3, 6, 13);
    const std::size_t replayed = schedule[0].option_index;

    bool attacker_caught = false;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const auto& step = schedule[i];

        // The honest detector's statistics follow every hop.
        const auto honest = characterize_run(options[step.option_index], 30000, 300 + i);
        CHECK_FALSE(spadmon::compare(baselines[step.option_index], honest).efficiency_alarm());

        // The attacker keeps emitting the first dwell's statistics.
        const auto replay = characterize_run(options[replayed], 30000, 400 + i);
        const auto verdict = spadmon::compare(baselines[step.option_index], replay);
        if (step.option_index != replayed) {
            CHECK(verdict.efficiency_alarm());
            attacker_caught = true;
        }
    }
    CHECK(attacker_caught);
}
