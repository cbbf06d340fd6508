#pragma once

#include <stdexcept>
#include <string>

namespace textclass {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 1, data errors -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct LabelError : Error {
    using Error::Error;
};

struct MappingError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

}  // namespace textclass
