#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tandem {

// Data-level failures derive from std::runtime_error so callers (notably the
// CLI) can distinguish them from std::invalid_argument parameter misuse.

class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    DimensionError(std::size_t expected, std::size_t got)
        : std::runtime_error("dimension mismatch: expected " + std::to_string(expected) +
                             ", got " + std::to_string(got)) {}
};

class ZeroNormError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    ZeroNormError() : std::runtime_error("cannot normalize a vector with (near-)zero L2 norm") {}
};

class DuplicateDocError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    explicit DuplicateDocError(const std::string& docid)
        : std::runtime_error("duplicate docid: " + docid) {}
};

class EmptyCorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    EmptyCorpusError() : std::runtime_error("corpus is empty") {}
};

class EmptyIndexError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    EmptyIndexError() : std::runtime_error("index contains no documents") {}
};

class EmptyInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    EmptyInputError() : std::runtime_error("no input runs given") {}
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatVersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    FormatVersionError(int supported, int found)
        : std::runtime_error("unsupported format version " + std::to_string(found) +
                             " (this build reads version " + std::to_string(supported) + ")") {}
};

class ChecksumError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (JSONL collections, run files, qrels, ...).
/// The message always carries file and line context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ": line " + std::to_string(line) + ": " + what) {}
};

} // namespace tandem
