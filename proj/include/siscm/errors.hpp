#pragma once

#include <stdexcept>
#include <string>

namespace siscm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An expert id is absent from a model set, partition or roster.
class MissingExpert : public Error {
public:
    explicit MissingExpert(const std::string& expert)
        : Error("unknown expert '" + expert + "'"), expert_(expert) {}

    const std::string& expert() const noexcept { return expert_; }

private:
    std::string expert_;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    explicit ParseError(const std::string& what) : Error(what) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class NotACliqueCover : public Error {
public:
    using Error::Error;
};

class TooLarge : public Error {
public:
    using Error::Error;
};

class InvalidEdge : public Error {
public:
    using Error::Error;
};

}  // namespace siscm
