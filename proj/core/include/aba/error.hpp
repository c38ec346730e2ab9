#pragma once

#include <stdexcept>
#include <string>

namespace aba {

// Shapes or widths of tensor operands disagree.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A scalar argument is outside its documented range.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Token id outside the vocabulary.
struct VocabularyError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Gold label index out of range for the sequence.
struct LabelError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Input file failed to parse.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input parsed but a required field is missing or has the wrong type.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Logically malformed input (duplicate ids, empty corpus, ...).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad model or run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure; message carries the path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace aba
