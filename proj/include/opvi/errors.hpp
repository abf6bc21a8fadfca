#ifndef OPVI_ERRORS_HPP
#define OPVI_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace opvi {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model configuration or mismatched variant payload.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The BCM-G graph cannot support rewiring (fewer than two edges).
class InfeasibleRewireError : public Error {
public:
    using Error::Error;
};

/// A vector did not have the dimension its variant requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A log-density term evaluated to a non-finite value.
class PoisonedValueError : public Error {
public:
    PoisonedValueError(std::size_t event_index, const std::string& what)
        : Error(what), event_index_(event_index)
    {}
    std::size_t event_index() const noexcept { return event_index_; }

private:
    std::size_t event_index_;
};

/// Reverse pass produced a non-finite adjoint.
class NonFiniteGradientError : public Error {
public:
    NonFiniteGradientError(std::size_t node, const std::string& what)
        : Error(what), node_(node)
    {}
    std::size_t node_index() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// Tape misuse: mixing tapes, incompatible shapes, unknown primitive.
class UnsupportedOperationError : public Error {
public:
    using Error::Error;
};

/// Optimizer or sampler hit a non-finite objective.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : Error(what), iteration_(iteration)
    {}
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// An ELBO sample was not finite; carries the offending draw.
class NonFiniteSampleError : public Error {
public:
    NonFiniteSampleError(std::vector<double> theta, const std::string& what)
        : Error(what), theta_(std::move(theta))
    {}
    const std::vector<double>& theta() const noexcept { return theta_; }

private:
    std::vector<double> theta_;
};

class TuningError : public Error {
public:
    using Error::Error;
};

/// Raised cooperatively when a method exceeds its wall-clock budget.
class TimeoutError : public Error {
public:
    using Error::Error;
};

} // namespace opvi

#endif // OPVI_ERRORS_HPP
