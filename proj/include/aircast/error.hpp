#pragma once

#include <stdexcept>
#include <string>

namespace aircast {

// Base for every error the library raises. `kind()` is the stable,
// machine-readable tag the CLI puts into its error JSON.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "validation"; }
};

class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "shape"; }
};

class OutOfBoundsError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "out_of_bounds"; }
};

class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "io"; }
};

class MissingArtifactError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "missing_artifact"; }
};

} // namespace aircast
