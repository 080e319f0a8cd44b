// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every core module. The C API maps each
// ErrorKind onto an mdap_status code.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdap {

enum class ErrorKind {
    shape,
    parameter,
    io,
    parse,
    data,
    state,
    numeric,
    training,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error(ErrorKind::parameter, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& what) : Error(ErrorKind::state, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

/// Raised when the training loss stops being finite. Carries the 1-based
/// epoch in which the divergence was detected.
class TrainingError : public Error {
public:
    TrainingError(std::size_t epoch, const std::string& what)
        : Error(ErrorKind::training, what), epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

} // namespace mdap
