#pragma once

#include <iosfwd>
#include <vector>

#include "spadmon/events.hpp"

namespace spadmon {

// Gated event log: header `gate_index,sub_gate_sample,cause`.
void write_gated_csv(std::ostream& out, const std::vector<DetectionEvent>& events);
std::vector<DetectionEvent> read_gated_csv(std::istream& in);

// Free-running event log: header `absolute_sample,cause`. The absolute
// sample rides in gate_index; sub_gate_sample is always 0.
void write_free_running_csv(std::ostream& out, const std::vector<DetectionEvent>& events);
std::vector<DetectionEvent> read_free_running_csv(std::istream& in);

}  // namespace spadmon
