#include "spadmon/event_io.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace spadmon {

const char* cause_name(EventCause cause) {
    switch (cause) {
        case EventCause::photon: return "photon";
        case EventCause::dark: return "dark";
        case EventCause::afterpulse: return "afterpulse";
        case EventCause::forced_click: return "forced_click";
    }
    throw std::invalid_argument("unknown event cause");
}

EventCause cause_from_name(const std::string& name) {
    if (name == "photon") return EventCause::photon;
    if (name == "dark") return EventCause::dark;
    if (name == "afterpulse") return EventCause::afterpulse;
    if (name == "forced_click") return EventCause::forced_click;
    throw std::invalid_argument("unknown event cause: " + name);
}

namespace {

[[noreturn]] void bad_row(std::size_t row, const std::string& why) {
    throw std::runtime_error("event CSV row " + std::to_string(row) + ": " + why);
}

std::uint64_t parse_count(const std::string& text, std::size_t row, const char* what) {
    try {
        std::size_t used = 0;
        const std::uint64_t value = std::stoull(text, &used);
        if (used != text.size()) bad_row(row, std::string("trailing characters in ") + what);
        return value;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        bad_row(row, std::string("unparsable ") + what + " '" + text + "'");
    }
}

}  // namespace

void write_gated_csv(std::ostream& out, const std::vector<DetectionEvent>& events) {
    out << "gate_index,sub_gate_sample,cause\n";
    for (const auto& e : events)
        out << e.gate_index << ',' << e.sub_gate_sample << ',' << cause_name(e.cause) << '\n';
}

std::vector<DetectionEvent> read_gated_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "gate_index,sub_gate_sample,cause")
        throw std::runtime_error("event CSV missing gated header");
    std::vector<DetectionEvent> events;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos) bad_row(row, "expected three fields");
        DetectionEvent e;
        e.gate_index = parse_count(line.substr(0, c1), row, "gate_index");
        e.sub_gate_sample = static_cast<std::uint32_t>(
            parse_count(line.substr(c1 + 1, c2 - c1 - 1), row, "sub_gate_sample"));
        try {
            e.cause = cause_from_name(line.substr(c2 + 1));
        } catch (const std::invalid_argument& err) {
            bad_row(row, err.what());
        }
        events.push_back(e);
    }
    return events;
}

void write_free_running_csv(std::ostream& out, const std::vector<DetectionEvent>& events) {
    out << "absolute_sample,cause\n";
    for (const auto& e : events)
        out << e.gate_index << ',' << cause_name(e.cause) << '\n';
}

std::vector<DetectionEvent> read_free_running_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "absolute_sample,cause")
        throw std::runtime_error("event CSV missing free-running header");
    std::vector<DetectionEvent> events;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) bad_row(row, "expected two fields");
        DetectionEvent e;
        e.gate_index = parse_count(line.substr(0, comma), row, "absolute_sample");
        e.sub_gate_sample = 0;
        try {
            e.cause = cause_from_name(line.substr(comma + 1));
        } catch (const std::invalid_argument& err) {
            bad_row(row, err.what());
        }
        events.push_back(e);
    }
    return events;
}

}  // namespace spadmon
