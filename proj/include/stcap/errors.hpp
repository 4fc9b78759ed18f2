#pragma once

#include <stdexcept>
#include <string>

namespace stcap {

// Base class of all errors thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& what) : Error(what) {}
};

struct EmptyWord : Error {
    explicit EmptyWord(const std::string& what) : Error(what) {}
};

struct EmptyReference : Error {
    explicit EmptyReference(const std::string& what) : Error(what) {}
};

struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

// Bad or missing configuration value; `key` names the offending entry.
struct ConfigError : Error {
    std::string key;
    ConfigError(const std::string& what, std::string key_)
        : Error(what), key(std::move(key_)) {}
};

// Malformed input file; `line` is 1-based.
struct ParseError : Error {
    int line;
    ParseError(const std::string& what, int line_) : Error(what), line(line_) {}
};

// Structurally valid file that violates the schema; `field` names the culprit.
struct SchemaError : Error {
    std::string field;
    SchemaError(const std::string& what, std::string field_)
        : Error(what), field(std::move(field_)) {}
};

struct EmptyReferenceSet : Error {
    explicit EmptyReferenceSet(const std::string& what) : Error(what) {}
};

struct CorpusTooSmall : Error {
    explicit CorpusTooSmall(const std::string& what) : Error(what) {}
};

struct DegenerateClusters : Error {
    explicit DegenerateClusters(const std::string& what) : Error(what) {}
};

}  // namespace stcap
