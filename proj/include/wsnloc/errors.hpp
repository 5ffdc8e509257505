#pragma once

#include <stdexcept>
#include <string>

namespace wsnloc {

/// Broad failure class, used by the CLI to pick an exit code.
enum class ErrorKind { Config, Numerical, Io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what)
        : Error(ErrorKind::Numerical, what) {}
};

// A source sits exactly on a sensor, where the attenuation model diverges.
class SingularDistance : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ZeroIncrement : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class StalledSchedule : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class AllZeroWeights : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NoFiniteEvidence : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularCovariance : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class FactorialOverflow : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SingularFim : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DimensionMismatch : public ConfigError {
public:
    using ConfigError::ConfigError;
};

}  // namespace wsnloc
