#include "mmbm/error.hpp"

namespace mmbm {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonGenerator: return "NonGenerator";
        case ErrorCode::NonDistribution: return "NonDistribution";
        case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::LevelTooCoarse: return "LevelTooCoarse";
        case ErrorCode::InsufficientChain: return "InsufficientChain";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::DegenerateInput: return "DegenerateInput";
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace mmbm
