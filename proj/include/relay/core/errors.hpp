#pragma once

#include <stdexcept>
#include <string>

namespace relay {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {
    using Error::Error;
};

struct ParamError : Error {
    using Error::Error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct ConsistencyError : Error {
    using Error::Error;
};

// Transient network-level failure, safe to retry with backoff.
struct NetworkError : Error {
    using Error::Error;
};

}  // namespace relay
