#pragma once

#include <stdexcept>
#include <string>

namespace nr {

// Base for everything thrown by this library. CLI maps InputError to exit
// code 2 and any other Error to exit code 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

struct BadMagicError : InputError {
    explicit BadMagicError(const std::string& msg) : InputError(msg) {}
};

struct TruncatedFileError : InputError {
    explicit TruncatedFileError(const std::string& msg) : InputError(msg) {}
};

struct CountMismatchError : InputError {
    explicit CountMismatchError(const std::string& msg) : InputError(msg) {}
};

}  // namespace nr
