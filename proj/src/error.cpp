#include "polydoc/error.hpp"

namespace polydoc {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnreadablePdf: return "UnreadablePdf";
    case ErrorCode::NoPages: return "NoPages";
    case ErrorCode::OcrUnavailable: return "OcrUnavailable";
    case ErrorCode::RenderFailure: return "RenderFailure";
    case ErrorCode::DuplicateDocId: return "DuplicateDocId";
    case ErrorCode::MissingSource: return "MissingSource";
    case ErrorCode::CorpusLocked: return "CorpusLocked";
    case ErrorCode::CorpusInvalid: return "CorpusInvalid";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmbedderUnreachable: return "EmbedderUnreachable";
    case ErrorCode::EmbedderDimDrift: return "EmbedderDimDrift";
    case ErrorCode::IndexCorrupt: return "IndexCorrupt";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ApiError: return "ApiError";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::CriticalParseFailure: return "CriticalParseFailure";
    case ErrorCode::JudgeParseFailure: return "JudgeParseFailure";
    case ErrorCode::DatasetInvalid: return "DatasetInvalid";
    case ErrorCode::ItemSetMismatch: return "ItemSetMismatch";
    }
    return "Unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(ErrorCode::ItemSetMismatch); ++i) {
        auto code = static_cast<ErrorCode>(i);
        if (to_string(code) == name) return code;
    }
    return std::nullopt;
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigInvalid:
        return ErrorCategory::Config;
    case ErrorCode::UnreadablePdf:
    case ErrorCode::NoPages:
    case ErrorCode::OcrUnavailable:
    case ErrorCode::RenderFailure:
    case ErrorCode::DuplicateDocId:
    case ErrorCode::MissingSource:
    case ErrorCode::CorpusLocked:
    case ErrorCode::CorpusInvalid:
        return ErrorCategory::Ingest;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmbedderDimDrift:
    case ErrorCode::IndexCorrupt:
        return ErrorCategory::Retrieval;
    case ErrorCode::EmbedderUnreachable:
    case ErrorCode::Transport:
    case ErrorCode::ApiError:
    case ErrorCode::EmptyCompletion:
    case ErrorCode::ShapeError:
        return ErrorCategory::Network;
    case ErrorCode::CriticalParseFailure:
    case ErrorCode::JudgeParseFailure:
    case ErrorCode::DatasetInvalid:
    case ErrorCode::ItemSetMismatch:
        return ErrorCategory::Evaluation;
    }
    return ErrorCategory::Evaluation;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

Error::Error(ErrorCode code, const std::string& message, int http_status, std::string body)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      http_status_(http_status),
      body_(std::move(body)) {}

Error Error::annotated(std::string_view context) const {
    // what() already carries the code prefix; strip it so it is not doubled.
    std::string msg = what();
    auto prefix = std::string(to_string(code_)) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    std::string full = std::string(context) + ": " + msg;
    if (http_status_) return Error(code_, full, *http_status_, body_);
    return Error(code_, full);
}

} // namespace polydoc
