#pragma once
#include <stdexcept>
#include <string>

namespace qpg {

enum class Err {
    PrecisionExhausted,
    RationalInput,
    InsufficientDepth,
    DepthInsufficient,
    DeltaTooLarge,
    EmptySet,
    UnboundedVariation,
    BadBounds,
    DivergentIntegral,
    SingularPhase,
    PrecisionLoss,
    UnboundedEntries,
    RangeTooSmall,
    NotAnEigenvalue,
    BadConfig,
    NumericFailure,
};

inline const char* err_name(Err e) {
    switch (e) {
        case Err::PrecisionExhausted: return "PrecisionExhausted";
        case Err::RationalInput: return "RationalInput";
        case Err::InsufficientDepth: return "InsufficientDepth";
        case Err::DepthInsufficient: return "DepthInsufficient";
        case Err::DeltaTooLarge: return "DeltaTooLarge";
        case Err::EmptySet: return "EmptySet";
        case Err::UnboundedVariation: return "UnboundedVariation";
        case Err::BadBounds: return "BadBounds";
        case Err::DivergentIntegral: return "DivergentIntegral";
        case Err::SingularPhase: return "SingularPhase";
        case Err::PrecisionLoss: return "PrecisionLoss";
        case Err::UnboundedEntries: return "UnboundedEntries";
        case Err::RangeTooSmall: return "RangeTooSmall";
        case Err::NotAnEigenvalue: return "NotAnEigenvalue";
        case Err::BadConfig: return "BadConfig";
        case Err::NumericFailure: return "NumericFailure";
    }
    return "UnknownError";
}

struct Error : std::runtime_error {
    Err code;
    Error(Err c, const std::string& msg)
        : std::runtime_error(std::string(err_name(c)) + ": " + msg), code(c) {}
};

[[noreturn]] inline void fail(Err c, const std::string& msg) { throw Error(c, msg); }

inline void require(bool ok, Err c, const std::string& msg) {
    if (!ok) fail(c, msg);
}

}  // namespace qpg
