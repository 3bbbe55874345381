#pragma once

#include <stdexcept>
#include <string>

namespace mixreg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A covariate point lies outside the unit hypercube.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A covariance matrix failed its Cholesky factorization.
class NotSPD : public Error {
public:
    using Error::Error;
};

/// A mixture component lost (almost) all its responsibility mass, or its
/// weighted normal equations could not be solved.
class DegenerateComponent : public Error {
public:
    DegenerateComponent(const std::string& what, int component, int iteration = -1)
        : Error(what), component_(component), iteration_(iteration) {}

    int component() const noexcept { return component_; }
    int iteration() const noexcept { return iteration_; }

private:
    int component_;
    int iteration_;
};

class UnsupportedDimension : public Error {
public:
    using Error::Error;
};

class TooFewPoints : public Error {
public:
    using Error::Error;
};

class InitFailure : public Error {
public:
    using Error::Error;
};

/// The selected-dimension path of the slope heuristic never drops.
class NoJump : public Error {
public:
    using Error::Error;
};

class InvalidBox : public Error {
public:
    using Error::Error;
};

class PreconditionViolated : public Error {
public:
    using Error::Error;
};

class BracketViolated : public Error {
public:
    using Error::Error;
};

/// Malformed CSV/JSON input.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace mixreg
