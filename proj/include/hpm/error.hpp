#pragma once

#include <stdexcept>
#include <string>

namespace hpm {

// Base for all library errors. Callers that only care about the exit-code
// contract can switch on the two subclasses below.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration: out-of-range labels, insufficient class
// support, degenerate features, non-PD covariance.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Missing files, short reads, failed writes.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace hpm
