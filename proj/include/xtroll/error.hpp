#pragma once

#include <stdexcept>
#include <string>

namespace xtroll {

// Base for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape inconsistencies between tensors (messages name both shapes).
struct DimensionError : Error {
    using Error::Error;
};

// Inputs outside an operation's mathematical domain.
struct DomainError : Error {
    using Error::Error;
};

// API misuse: broken preconditions that are bugs, not data issues.
struct ContractError : Error {
    using Error::Error;
};

// Invalid run configuration (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Missing or unreadable files (CLI exit code 3).
struct FileError : Error {
    using Error::Error;
};

// Incompatible corpus/checkpoint versions (CLI exit code 4).
struct VersionError : Error {
    using Error::Error;
};

}  // namespace xtroll
