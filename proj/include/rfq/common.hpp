#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rfq {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class ErrorCode {
    EmptyDims,
    ZeroDim,
    DimMismatch,
    ShapeMismatch,
    SingularGram,
    NoConvergence,
    DomainViolation,
    Divergence,
    NonpositiveVariance,
    NonOddActivation,
    LayerOutOfRange,
    DegenerateRatio,
    BadMagic,
    Truncated,
    InsufficientClass,
    InsufficientData,
    OutOfRange,
    IoError,
    ParseError,
    InvalidConfig,
};

const char* error_name(ErrorCode c);

// Domain error carrying a machine-readable code. what() is "<Code>: <detail>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail);
    ErrorCode code() const { return code_; }
    const std::string& detail() const { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

// SplitMix64 finalizer; used to derive independent seeds from a master seed.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t split_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace rfq
