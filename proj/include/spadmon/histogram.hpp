#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spadmon/events.hpp"

namespace spadmon {

// Timebase of an interval histogram: gate counts for gated operation,
// A/D sample counts for free-running and timing analysis.
enum class IntervalUnit : std::uint8_t { gates, samples };

const char* unit_name(IntervalUnit unit);
IntervalUnit unit_from_name(const std::string& name);

// Streaming accumulator of inter-detection intervals. Bin b stores the
// count of intervals of exactly b units, b in [1, n_bins]; anything
// longer lands in the overflow bin. Feed events one at a time or in
// batches; begin_segment() marks a break so the next event opens no
// interval. One writer per instance; use merge for parallel shards.
class IntervalHistogram {
public:
    explicit IntervalHistogram(IntervalUnit unit, std::size_t n_bins = 4096);

    IntervalUnit unit() const { return unit_; }
    std::size_t n_bins() const { return counts_.size(); }

    // Count of intervals of exactly `interval` units (1-based).
    std::uint64_t count(std::uint64_t interval) const;
    std::uint64_t overflow() const { return overflow_; }
    std::uint64_t total() const { return total_; }
    std::uint64_t segments() const { return segments_; }

    // Feed the next event position (gate index or absolute sample). The
    // first position after construction or begin_segment() opens no
    // interval. Positions must be strictly increasing within a segment.
    void add_position(std::uint64_t position);

    // Start a new stream segment; the next position is a fresh anchor.
    void begin_segment();

    // Record one interval directly.
    void add_interval(std::uint64_t interval);

    // Bin-wise sum with another histogram of identical unit and shape.
    void merge_from(const IntervalHistogram& other);

    // Empirical pmf: entry [b-1] = count(b)/total. Sums to
    // 1 - overflow/total. Throws std::runtime_error when total is 0.
    std::vector<double> normalized() const;

    // Distribution equality: unit, bin counts, and overflow. Transient
    // streaming state (anchors, segment tally) is not part of identity.
    bool operator==(const IntervalHistogram& other) const {
        return unit_ == other.unit_ && counts_ == other.counts_ && overflow_ == other.overflow_;
    }

    // CSV round-trip: unit comment, `interval,count` header, one row per
    // bin, `overflow,<count>` trailer.
    void write_csv(std::ostream& out) const;
    static IntervalHistogram read_csv(std::istream& in);

private:
    IntervalUnit unit_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t overflow_ = 0;
    std::uint64_t total_ = 0;
    std::uint64_t segments_ = 0;
    bool has_anchor_ = false;
    std::uint64_t last_position_ = 0;
};

// One-shot accumulation over an ordered event stream (one segment).
// Gated events use gate_index; sample-unit accumulation uses the
// absolute sample position gate_index * samples_per_gate + sub_gate_sample.
IntervalHistogram accumulate(const std::vector<DetectionEvent>& events, IntervalUnit unit,
                             std::size_t n_bins, std::uint64_t samples_per_gate = 1);

}  // namespace spadmon
