#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace floodsr {

enum class ErrorKind {
    MalformedHeader,
    IllegalPixel,
    TruncatedPayload,
    NonFiniteValue,
    IoFailure,
    IndivisibleDimensions,
    ShapeMismatch,
    BadSize,
    InvalidConfig,
    EmptyDataset,
    ZeroDenominator,
    ChannelIndivisible,
    NonFiniteActivation,
    ConfigMismatch,
    DivergedLoss,
    EmptyBudget,
    EmptyMask,
    SingleClassMask,
    DomainError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace floodsr
