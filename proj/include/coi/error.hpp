#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coi {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(std::size_t line_number, const std::string& reason)
        : Error("line " + std::to_string(line_number) + ": " + reason),
          line_number_(line_number), reason_(reason) {}

    std::size_t line_number() const noexcept { return line_number_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_number_;
    std::string reason_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition (e.g. support/eval overlap).
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace coi
