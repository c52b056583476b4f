#pragma once

#include <stdexcept>
#include <string>

namespace multitrans {

/// Tensor shapes that do not fit the operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition of a public operation was violated.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite input or a value outside an operation's domain.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward on a consumed tape).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace multitrans
