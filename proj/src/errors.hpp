#pragma once

#include <stdexcept>
#include <string>

namespace ub {

// Error hierarchy shared by all modules. The C API maps these onto the
// numeric status codes in include/userbert/userbert.h.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

struct ContractViolation : Error {
    explicit ContractViolation(const std::string& msg) : Error("contract violation: " + msg) {}
};

struct PoolExhausted : Error {
    explicit PoolExhausted(const std::string& msg) : Error("pool exhausted: " + msg) {}
};

struct SplitInfeasible : Error {
    explicit SplitInfeasible(const std::string& msg) : Error("split infeasible: " + msg) {}
};

}  // namespace ub
