#pragma once

#include <stdexcept>
#include <string>

namespace supercl {

// Contract violations: a caller broke a precondition. CLI maps these to exit 1.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroVector : ContractError {
    using ContractError::ContractError;
};
struct TooManyClusters : ContractError {
    using ContractError::ContractError;
};
struct BadTarget : ContractError {
    using ContractError::ContractError;
};
struct BadStride : ContractError {
    using ContractError::ContractError;
};
struct LengthMismatch : ContractError {
    using ContractError::ContractError;
};
struct EmptyPositives : ContractError {
    using ContractError::ContractError;
};
struct ShapeError : ContractError {
    using ContractError::ContractError;
};
struct StaleCache : ContractError {
    using ContractError::ContractError;
};

// I/O and on-disk format failures. CLI maps these to exit 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : IoError {
    using IoError::IoError;
};
struct TruncatedPayload : IoError {
    using IoError::IoError;
};
struct FileError : IoError {
    using IoError::IoError;
};

} // namespace supercl
