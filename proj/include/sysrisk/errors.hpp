#pragma once

#include <stdexcept>
#include <string>

namespace sysrisk {

/// A precondition on model inputs was violated (non-positive depth, bad shape, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input files.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sysrisk
