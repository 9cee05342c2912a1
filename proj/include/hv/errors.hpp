#pragma once

#include <stdexcept>
#include <string>

namespace hv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible dimensions; the message carries both dim lists.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf appeared in an op output.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing user input (files, flags, keypoints).
class InputError : public Error {
public:
    using Error::Error;
};

/// Keypoints lack a joint the mask construction needs.
class InsufficientPoseError : public InputError {
public:
    using InputError::InputError;
};

/// An internal invariant did not hold (CLI exit code 1).
class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace hv
