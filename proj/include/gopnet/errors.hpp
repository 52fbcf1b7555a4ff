#pragma once

#include <stdexcept>
#include <string>

namespace gopnet {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or size mismatch between arguments.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Argument outside the valid domain (bad operator id, empty pool input,
// unusable fold layout, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// Unreadable or unwritable file.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed input text. Carries the location when one is known.
class ParseError : public Error {
public:
    using Error::Error;

    static ParseError at(const std::string& file, long line, long column,
                         const std::string& message) {
        return ParseError(file + ":" + std::to_string(line) + ":" +
                          std::to_string(column) + ": " + message);
    }
    static ParseError at(const std::string& file, long line,
                         const std::string& message) {
        return ParseError(file + ":" + std::to_string(line) + ": " + message);
    }
};

// Model file written by an incompatible format version.
class VersionError : public Error {
public:
    using Error::Error;
};

// Operator name in a model file that is not part of the library.
class UnknownOperatorError : public Error {
public:
    using Error::Error;
};

// Non-finite value produced during computation. `layer` is the index of the
// hidden layer where the value appeared, or -1 when not layer-specific.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, int layer_index = -1)
        : Error(layer_index >= 0
                    ? what + " (layer " + std::to_string(layer_index) + ")"
                    : what),
          layer(layer_index) {}

    int layer;
};

// Gram matrix not positive definite in an unregularized solve.
class SingularityError : public Error {
public:
    using Error::Error;
};

// A training class with zero samples, for which an inverse-frequency weight
// is undefined.
class DegenerateClassError : public Error {
public:
    using Error::Error;
};

// Operator-set search where every candidate was discarded.
class SearchError : public Error {
public:
    using Error::Error;
};

}  // namespace gopnet
