#pragma once

#include <stdexcept>
#include <string>

namespace effope {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inputs whose shapes do not line up (policy vs. model, vector lengths).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A model, policy or distribution that breaks one of its invariants.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// The chain has more than one recurrent class, so its stationary law is not unique.
class NonErgodicError : public Error {
public:
    using Error::Error;
};

/// Data do not cover a state or state-action pair that an estimate needs.
class CoverageError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Two computations that must agree did not; indicates a solver defect.
class InternalConsistencyError : public Error {
public:
    using Error::Error;
};

/// A perturbation step outside the admissible range of its direction.
class PerturbationRangeError : public Error {
public:
    using Error::Error;
};

/// Assumptions of an experiment are not met (e.g. tied optimal actions).
class PreconditionError : public Error {
public:
    using Error::Error;
};

} // namespace effope
