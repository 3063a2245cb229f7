#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cotsfa {

// Base for every error raised by the library. The CLI maps ValidationError and
// its subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class TrainingAborted : public Error {
public:
    TrainingAborted(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace cotsfa
