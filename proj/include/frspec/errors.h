#pragma once

#include <stdexcept>

namespace frspec {

// Rejected inputs (contract violations on arguments) throw std::invalid_argument.

// A sequence, cache or mask would exceed a fixed capacity (max_seq_len, 64-node trees).
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or unreadable on-disk data (bad magic, truncated file, unparsable ids).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace frspec
