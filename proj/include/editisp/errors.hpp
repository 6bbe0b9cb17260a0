#pragma once

#include <stdexcept>
#include <string>

namespace editisp {

/// Invalid argument or violated precondition. CLI exit code 1.
class ArgumentError : public std::runtime_error {
public:
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unrecognized or incompatible file layout (bad magic, wrong version).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File recognized but payload inconsistent with its header.
class CorruptFileError : public FormatError {
public:
    explicit CorruptFileError(const std::string& msg) : FormatError(msg) {}
};

/// Filesystem failure (missing path, unwritable target). CLI exit code 3.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Object used outside its valid lifetime (stale tape, missing weights).
class StateError : public std::runtime_error {
public:
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure (divergence, non-finite values). CLI exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace editisp
