#include "spadmon/histogram.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace spadmon {

const char* unit_name(IntervalUnit unit) {
    return unit == IntervalUnit::gates ? "gates" : "samples";
}

IntervalUnit unit_from_name(const std::string& name) {
    if (name == "gates") return IntervalUnit::gates;
    if (name == "samples") return IntervalUnit::samples;
    throw std::invalid_argument("unknown interval unit: " + name);
}

IntervalHistogram::IntervalHistogram(IntervalUnit unit, std::size_t n_bins)
    : unit_(unit), counts_(n_bins, 0) {
    if (n_bins < 1) throw std::invalid_argument("histogram needs at least one bin");
}

std::uint64_t IntervalHistogram::count(std::uint64_t interval) const {
    if (interval < 1 || interval > counts_.size())
        throw std::out_of_range("interval outside histogram range");
    return counts_[interval - 1];
}

void IntervalHistogram::add_position(std::uint64_t position) {
    if (has_anchor_) {
        if (position <= last_position_)
            throw std::runtime_error("event stream not strictly increasing at position " +
                                     std::to_string(position));
        add_interval(position - last_position_);
    } else {
        has_anchor_ = true;
        ++segments_;
    }
    last_position_ = position;
}

void IntervalHistogram::begin_segment() {
    has_anchor_ = false;
}

void IntervalHistogram::add_interval(std::uint64_t interval) {
    if (interval < 1) throw std::invalid_argument("intervals are at least one unit");
    if (interval <= counts_.size()) {
        ++counts_[interval - 1];
    } else {
        ++overflow_;
    }
    ++total_;
}

void IntervalHistogram::merge_from(const IntervalHistogram& other) {
    if (unit_ != other.unit_ || counts_.size() != other.counts_.size())
        throw std::invalid_argument("cannot merge histograms of different unit or size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    overflow_ += other.overflow_;
    total_ += other.total_;
    segments_ += other.segments_;
}

std::vector<double> IntervalHistogram::normalized() const {
    if (total_ == 0) throw std::runtime_error("cannot normalize an empty histogram");
    std::vector<double> pmf(counts_.size());
    const double inv = 1.0 / static_cast<double>(total_);
    for (std::size_t i = 0; i < counts_.size(); ++i)
        pmf[i] = static_cast<double>(counts_[i]) * inv;
    return pmf;
}

void IntervalHistogram::write_csv(std::ostream& out) const {
    out << "# unit: " << unit_name(unit_) << "\n";
    out << "interval,count\n";
    for (std::size_t i = 0; i < counts_.size(); ++i)
        out << (i + 1) << ',' << counts_[i] << '\n';
    out << "overflow," << overflow_ << '\n';
}

IntervalHistogram IntervalHistogram::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# unit: ", 0) != 0)
        throw std::runtime_error("histogram CSV missing unit comment");
    const IntervalUnit unit = unit_from_name(line.substr(8));
    if (!std::getline(in, line) || line != "interval,count")
        throw std::runtime_error("histogram CSV missing interval,count header");

    const auto parse_uint = [](const std::string& token, std::size_t at_row) {
        if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
            throw std::runtime_error("histogram CSV row " + std::to_string(at_row) +
                                     ": '" + token + "' is not a count");
        try {
            return std::stoull(token);
        } catch (const std::out_of_range&) {
            throw std::runtime_error("histogram CSV row " + std::to_string(at_row) +
                                     ": '" + token + "' does not fit in 64 bits");
        }
    };

    std::vector<std::uint64_t> counts;
    std::uint64_t overflow = 0;
    bool saw_overflow = false;
    std::size_t row = 2;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("histogram CSV row " + std::to_string(row) +
                                     " has no comma");
        const std::string key = line.substr(0, comma);
        const std::uint64_t value = parse_uint(line.substr(comma + 1), row);
        if (key == "overflow") {
            overflow = value;
            saw_overflow = true;
            break;
        }
        if (parse_uint(key, row) != counts.size() + 1)
            throw std::runtime_error("histogram CSV row " + std::to_string(row) +
                                     " out of sequence");
        counts.push_back(value);
    }
    if (!saw_overflow) throw std::runtime_error("histogram CSV missing overflow trailer");
    if (counts.empty()) throw std::runtime_error("histogram CSV has no bins");

    IntervalHistogram h(unit, counts.size());
    h.counts_ = std::move(counts);
    h.overflow_ = overflow;
    for (std::size_t i = 0; i < h.counts_.size(); ++i) h.total_ += h.counts_[i];
    h.total_ += overflow;
    // Round-tripped histograms carry no segment bookkeeping; treat the
    // whole file as one accumulated segment when it holds any intervals.
    h.segments_ = h.total_ > 0 ? 1 : 0;
    return h;
}

IntervalHistogram accumulate(const std::vector<DetectionEvent>& events, IntervalUnit unit,
                             std::size_t n_bins, std::uint64_t samples_per_gate) {
    IntervalHistogram h(unit, n_bins);
    for (const auto& e : events) {
        const std::uint64_t position =
            unit == IntervalUnit::gates
                ? e.gate_index
                : e.gate_index * samples_per_gate + e.sub_gate_sample;
        h.add_position(position);
    }
    return h;
}

}  // namespace spadmon
