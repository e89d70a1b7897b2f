#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geomed {

// Precondition broken by the caller (dimension mismatch, non-finite input).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Configuration or hypothesis rejected before any work is done.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file; `row` is 1-based, 0 when the error is not row specific.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row)
        : std::runtime_error(row == 0 ? what : what + " (row " + std::to_string(row) + ")"),
          row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class SourceExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace geomed
