#pragma once

#include <stdexcept>

namespace spadmon {

// Raised when a stream or histogram holds too few events for the
// requested analysis (degenerate tails, short free-running captures,
// segment counts that exceed the stream).
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace spadmon
