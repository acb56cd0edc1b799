#pragma once

#include <stdexcept>
#include <string>

namespace zql {

/// Error codes shared across the library and surfaced as CLI exit codes.
enum class ErrorCode {
    ZeroInverse,
    FrozenSystem,
    DegreeTooHigh,
    UnknownColumn,
    ShapeMismatch,
    WitnessInfeasible,
    BudgetExceeded,
    ParseError,
    UnsupportedFeature,
    CommitmentMismatch,
    ConstraintFailure,
    DivisionByZeroGroup,
    OutOfRange,
    InternalInconsistency,
    IoError,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::ZeroInverse: return "ZeroInverse";
        case ErrorCode::FrozenSystem: return "FrozenSystem";
        case ErrorCode::DegreeTooHigh: return "DegreeTooHigh";
        case ErrorCode::UnknownColumn: return "UnknownColumn";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::WitnessInfeasible: return "WitnessInfeasible";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
        case ErrorCode::CommitmentMismatch: return "CommitmentMismatch";
        case ErrorCode::ConstraintFailure: return "ConstraintFailure";
        case ErrorCode::DivisionByZeroGroup: return "DivisionByZeroGroup";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::InternalInconsistency: return "InternalInconsistency";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace zql
