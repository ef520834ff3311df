#pragma once

#include <stdexcept>
#include <string>

namespace maccoop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: unnormalized distributions, non-bijective permutations,
/// partial tables, mismatched alphabets.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An enumeration guard refused the request.
class SizeLimitError : public Error {
public:
    using Error::Error;
};

/// A message index or similar argument is out of range.
class InputError : public Error {
public:
    using Error::Error;
};

/// Exact search would exceed its budget.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

/// A construction could not be certified (no good permutations were found).
class CertificateError : public Error {
public:
    using Error::Error;
};

}  // namespace maccoop
