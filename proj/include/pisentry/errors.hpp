#pragma once

#include <stdexcept>

namespace pisentry {

// Library code throws; the CLI maps exception types to exit codes
// (IoError -> 2, SchemaError -> 3, everything else -> 1).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pisentry
