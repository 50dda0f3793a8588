#include "floodsr/grid.hpp"

#include <cmath>

namespace floodsr {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::MalformedHeader: return "MalformedHeader";
        case ErrorKind::IllegalPixel: return "IllegalPixel";
        case ErrorKind::TruncatedPayload: return "TruncatedPayload";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::IndivisibleDimensions: return "IndivisibleDimensions";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::BadSize: return "BadSize";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::ZeroDenominator: return "ZeroDenominator";
        case ErrorKind::ChannelIndivisible: return "ChannelIndivisible";
        case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
        case ErrorKind::ConfigMismatch: return "ConfigMismatch";
        case ErrorKind::DivergedLoss: return "DivergedLoss";
        case ErrorKind::EmptyBudget: return "EmptyBudget";
        case ErrorKind::EmptyMask: return "EmptyMask";
        case ErrorKind::SingleClassMask: return "SingleClassMask";
        case ErrorKind::DomainError: return "DomainError";
    }
    return "Unknown";
}

void validate(const ScaleFactor& scale) {
    if (scale.f < 2) fail(ErrorKind::InvalidConfig, "scale factor must be >= 2");
}

void validate(const BandLimits& band) {
    if (!std::isfinite(band.lo) || !std::isfinite(band.hi) || band.lo < 0.0 || band.hi > 1.0 ||
        !(band.lo < band.hi)) {
        fail(ErrorKind::InvalidConfig, "band limits must satisfy 0 <= lo < hi <= 1");
    }
}

}  // namespace floodsr
