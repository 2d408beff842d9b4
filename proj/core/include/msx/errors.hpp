#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace msx {

// Precondition violated by a caller-supplied value.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file; carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

// A sample could not be produced within the retry budget.
class GenerationError : public std::runtime_error {
public:
    GenerationError(const std::string& what, std::uint64_t seed)
        : std::runtime_error(what), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

// Manifest disagrees with the files on disk.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace msx
