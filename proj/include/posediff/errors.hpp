#pragma once

#include <stdexcept>
#include <string>

namespace posediff {

enum class ErrorCode {
    BadMagic,
    ShapeMismatch,
    NonFinite,
    IndexOutOfRange,
    EmptyDataset,
    IoError,
    InvalidRange,
    InvalidTimestep,
    TooFewSteps,
    BadShape,
    WidthMismatch,
    Divergence,
    MissingExternalEmbedding,
    MissingPose,
    MissingCheckpoint,
    CheckpointMissing,
    EmptyPoseSequence,
    TooSmall,
    ConfigError,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::InvalidTimestep: return "InvalidTimestep";
        case ErrorCode::TooFewSteps: return "TooFewSteps";
        case ErrorCode::BadShape: return "BadShape";
        case ErrorCode::WidthMismatch: return "WidthMismatch";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::MissingExternalEmbedding: return "MissingExternalEmbedding";
        case ErrorCode::MissingPose: return "MissingPose";
        case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
        case ErrorCode::CheckpointMissing: return "CheckpointMissing";
        case ErrorCode::EmptyPoseSequence: return "EmptyPoseSequence";
        case ErrorCode::TooSmall: return "TooSmall";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

// All library errors are thrown as posediff::Error so callers can branch on
// the code instead of parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

}  // namespace posediff
