#pragma once

#include <stdexcept>
#include <string>

namespace htmd {

// Broad failure classes. The CLI maps these onto its exit codes.
enum class ErrorClass { usage, data, numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

// Shape or contract violation inside the differentiable core.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorClass::data, what) {}
};

// NaN/Inf encountered in values, gradients or losses.
class NumericFault : public Error {
public:
    explicit NumericFault(const std::string& what) : Error(ErrorClass::numeric, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorClass::usage, what) {}
};

class DatasetError : public Error {
public:
    explicit DatasetError(const std::string& what) : Error(ErrorClass::data, what) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& what) : Error(ErrorClass::data, what) {}
};

}  // namespace htmd
