#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmapcut {

// Closed set of failure codes shared by every module, the CLI and the HTTP API.
enum class ErrorCode {
    NotFound,
    UnsupportedFormat,
    CorruptData,
    ValueOutOfRange,
    IoFailure,
    OutOfBounds,
    DimensionMismatch,
    InvalidArgument,
    PlacementFailed,
    EmptyInput,
    NegativeUnary,
    EmptyForeground,
    EmptyBackground,
    ScaleTooLarge,
    ParseError,
    RankTooHigh,
    SingleClass,
    MissingClass,
};

constexpr std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptData: return "CorruptData";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PlacementFailed: return "PlacementFailed";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NegativeUnary: return "NegativeUnary";
    case ErrorCode::EmptyForeground: return "EmptyForeground";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    case ErrorCode::ScaleTooLarge: return "ScaleTooLarge";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RankTooHigh: return "RankTooHigh";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingClass: return "MissingClass";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail)
    {
    }

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace pmapcut
