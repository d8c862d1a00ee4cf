#pragma once

#include <stdexcept>
#include <string>

namespace hapmetric {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed input (bad config, bad file, wrong dims).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Filesystem or parse failure while reading/writing a file.
class IoError : public Error {
public:
    using Error::Error;
};

/// A numerical routine produced a non-finite or otherwise unusable result.
class ComputationError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

}  // namespace detail

}  // namespace hapmetric
