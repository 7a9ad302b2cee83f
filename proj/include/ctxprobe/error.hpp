#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

// Error categories map one-to-one onto CLI exit codes (see pipeline_cli.hpp).
enum class ErrorKind { usage, data, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Malformed or inconsistent input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

// Invalid arguments or preconditions supplied by the caller.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

// A request conflicts with existing state (e.g. a second, different label
// from the same annotator).
class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& what) : Error(ErrorKind::data, what) {}
};

}  // namespace ctxprobe
