#pragma once

#include <stdexcept>
#include <string>

namespace cogspeech {

// Base for everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input data: bad CSV headers, quoted fields, unsupported or
// truncated WAV files, unparseable backend output.
class FormatError : public Error {
public:
    using Error::Error;
};

// Values outside a documented range (MMSE bounds, degenerate normalizer).
class RangeError : public Error {
public:
    using Error::Error;
};

// Bad call arguments: dimension mismatches, invalid fractions or weights,
// degenerate label sets, empty inputs where forbidden.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A stated operation precondition does not hold (e.g. wrong sample rate).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// External command failed; message carries captured diagnostics.
class BackendError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public BackendError {
public:
    using BackendError::BackendError;
};

// Non-finite values where finite ones are required; training divergence.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace cogspeech
