#pragma once

#include <stdexcept>
#include <string>

namespace ucan {

/// Broad failure category. Each one maps to a stable CLI exit code.
enum class ErrorKind { validation = 1, runtime = 2, io = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error(ErrorKind::validation, w) {}
};

struct ShapeMismatch : ValidationError {
    explicit ShapeMismatch(const std::string& w) : ValidationError("shape mismatch: " + w) {}
};

struct DegenerateInput : ValidationError {
    explicit DegenerateInput(const std::string& w) : ValidationError("degenerate input: " + w) {}
};

struct InvalidRecord : ValidationError {
    explicit InvalidRecord(const std::string& w) : ValidationError("invalid record: " + w) {}
};

struct MissingModality : ValidationError {
    explicit MissingModality(const std::string& w) : ValidationError("missing modality: " + w) {}
};

struct UndefinedMetric : Error {
    explicit UndefinedMetric(const std::string& w) : Error(ErrorKind::runtime, "undefined metric: " + w) {}
};

/// Raised when a loss term becomes NaN/Inf during training.
struct DivergenceError : Error {
    DivergenceError(const std::string& term, const std::string& w)
        : Error(ErrorKind::runtime, "training diverged (" + term + "): " + w), term_(term) {}
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

}  // namespace ucan
