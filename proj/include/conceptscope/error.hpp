#pragma once

#include <stdexcept>
#include <string>

namespace cscope {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameters or configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dimension or shape disagreement between inputs.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input that is well-formed but numerically degenerate (zero variance,
/// zero-length direction, empty class...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Gradient descent produced a non-finite loss.
class TrainingError : public Error {
public:
    TrainingError(int epoch, const std::string& what)
        : Error("training diverged at epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// File system or parse failure; the message always names the path.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace cscope
