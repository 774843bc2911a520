#pragma once

#include <stdexcept>
#include <string>

namespace msfcev {

// Argument outside the documented domain of a function or type.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// A series, continued fraction or iteration exhausted its term budget.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Failure of a numerical routine that is not a plain convergence issue
// (factorization breakdown, quadrature subdivision limit, mass drift).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// A chain with no usable quotes.
class EmptyChainError : public DomainError {
public:
    explicit EmptyChainError(const std::string& what) : DomainError(what) {}
};

// Every optimizer start failed to produce a finite objective.
class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input text. `line` is 1-based; 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace msfcev
