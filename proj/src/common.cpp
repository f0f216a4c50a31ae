#include "rfq/common.hpp"

namespace rfq {

const char* error_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::EmptyDims: return "EmptyDims";
        case ErrorCode::ZeroDim: return "ZeroDim";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::SingularGram: return "SingularGram";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::DomainViolation: return "DomainViolation";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::NonpositiveVariance: return "NonpositiveVariance";
        case ErrorCode::NonOddActivation: return "NonOddActivation";
        case ErrorCode::LayerOutOfRange: return "LayerOutOfRange";
        case ErrorCode::DegenerateRatio: return "DegenerateRatio";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::Truncated: return "Truncated";
        case ErrorCode::InsufficientClass: return "InsufficientClass";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code), detail_(detail) {}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(mix64(master) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

}  // namespace rfq
