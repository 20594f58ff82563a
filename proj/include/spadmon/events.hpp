#pragma once

#include <cstdint>
#include <string>

namespace spadmon {

// What produced a detection. forced_click marks avalanches injected by an
// adversarial bright pulse rather than by the legitimate channel.
enum class EventCause : std::uint8_t {
    photon,
    dark,
    afterpulse,
    forced_click,
};

// Stable lowercase names used in CSV event logs.
const char* cause_name(EventCause cause);
EventCause cause_from_name(const std::string& name);

struct DetectionEvent {
    std::uint64_t gate_index = 0;    // gate number; absolute sample index in free-running mode
    std::uint32_t sub_gate_sample = 0;  // sample offset within the gate (0 in free-running mode)
    EventCause cause = EventCause::photon;

    bool operator==(const DetectionEvent&) const = default;
};

}  // namespace spadmon
