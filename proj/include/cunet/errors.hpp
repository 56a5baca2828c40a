#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cunet {

/// Shape or precondition violated by the caller.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Data that does not satisfy a domain invariant (labels, masks, splits).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered during a forward or backward pass.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Weighted loss with an all-zero sample matrix; callers skip the batch.
class DegenerateBatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary file. `offset()` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cunet
