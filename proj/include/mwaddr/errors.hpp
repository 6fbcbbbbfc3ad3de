#pragma once

#include <stdexcept>
#include <string>

namespace mwaddr {

/// Base of every error raised by the library. The CLI maps these to exit code 2.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Second-order field expansion used outside its domain.
class ValidityViolation : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class IntegrationFailure : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class FitFailure : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class DegenerateFit : public FitFailure {
public:
  using FitFailure::FitFailure;
};

class Infeasible : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class ZeroGradient : public NumericalError {
public:
  using NumericalError::NumericalError;
};

/// Malformed configuration, plan or manifest text. Reported as a usage error.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mwaddr
