#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proxyscope {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParameterError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& what, std::size_t offset_, std::size_t block_ = 0)
        : Error(what), offset(offset_), block(block_) {}
    std::size_t offset;  // byte offset of the first inconsistency
    std::size_t block;   // PEM block index, when decoding concatenated PEM
};

struct EmptyChainError : Error {
    using Error::Error;
};

struct UnsupportedAlgorithmError : Error {
    using Error::Error;
};

struct AggregationError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct UnknownTargetError : Error {
    using Error::Error;
};

struct RetryableError : Error {
    using Error::Error;
};

}  // namespace proxyscope
