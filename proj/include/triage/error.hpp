#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace triage {

enum class ErrorCode {
    Precondition,
    MalformedHeader,
    EmptyImports,
    EmptyInput,
    EmptyList,
    DimensionMismatch,
    KnowledgeUnavailable,
    SpanMismatch,
    SchemaViolation,
    IoFailure,
    IndexNotBuilt,
    ScorerFailure,
    CtiUnavailable,
    NoSignal,
    WeightSumViolation,
    ThresholdOrderViolation,
    UnsupportedFileType,
    AllToolsFailed,
    GeneratorUnavailable,
    MissingTranscript,
    TooFewRecords,
    InvalidRequest,
    NotFound,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::EmptyImports: return "EmptyImports";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::KnowledgeUnavailable: return "KnowledgeUnavailable";
    case ErrorCode::SpanMismatch: return "SpanMismatch";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::IndexNotBuilt: return "IndexNotBuilt";
    case ErrorCode::ScorerFailure: return "ScorerFailure";
    case ErrorCode::CtiUnavailable: return "CtiUnavailable";
    case ErrorCode::NoSignal: return "NoSignal";
    case ErrorCode::WeightSumViolation: return "WeightSumViolation";
    case ErrorCode::ThresholdOrderViolation: return "ThresholdOrderViolation";
    case ErrorCode::UnsupportedFileType: return "UnsupportedFileType";
    case ErrorCode::AllToolsFailed: return "AllToolsFailed";
    case ErrorCode::GeneratorUnavailable: return "GeneratorUnavailable";
    case ErrorCode::MissingTranscript: return "MissingTranscript";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::NotFound: return "NotFound";
    }
    return "Unknown";
}

/// Domain error raised by every module. `code()` identifies the failure
/// class so callers can degrade selectively (e.g. CtiUnavailable).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace triage
