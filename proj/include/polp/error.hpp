#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace polp {

/// Base of every error raised by the library. Carries the name of the module
/// that raised it so front ends can print tagged diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

/// Syntax or semantic error located in some input text (1-based line/column).
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& message)
        : Error("parser", std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column), message_(message) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string message_;
};

/// A name in a problem specification that does not resolve against the program.
class ResolutionError : public Error {
public:
    explicit ResolutionError(const std::string& what) : Error("parser", what) {}
};

/// A configured cap (ground rules, nodes, monomials, time) was exceeded.
class ResourceError : public Error {
public:
    ResourceError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    ContractError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

} // namespace polp
