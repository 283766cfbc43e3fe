#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace robit {

/// Precondition violated by a caller-supplied argument.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input data. Carries the offending row when known.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::ptrdiff_t row = -1)
        : std::runtime_error(row >= 0 ? what + " (row " + std::to_string(row) + ")" : what),
          row_(row) {}

    std::ptrdiff_t row() const noexcept { return row_; }

private:
    std::ptrdiff_t row_;
};

/// A numerical step failed (non-SPD matrix, non-finite density, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A Gibbs chain aborted; wraps the step error with the iteration index.
/// chain() is the 0-based index; the message numbers chains from 1 as in draw files.
class ChainAborted : public NumericalError {
public:
    ChainAborted(const std::string& what, std::size_t chain, std::size_t iteration)
        : NumericalError("chain " + std::to_string(chain + 1) + " aborted at iteration " +
                         std::to_string(iteration) + ": " + what),
          chain_(chain), iteration_(iteration) {}

    std::size_t chain() const noexcept { return chain_; }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t chain_;
    std::size_t iteration_;
};

namespace detail {

template <class Message>
inline void require(bool condition, Message&& message) {
    if (!condition) throw InvalidArgument(std::string(std::forward<Message>(message)));
}

} // namespace detail
} // namespace robit
