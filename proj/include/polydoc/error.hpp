#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace polydoc {

/// Broad error classes. The CLI maps each class to a distinct exit code.
enum class ErrorCategory { Config, Ingest, Retrieval, Network, Evaluation };

enum class ErrorCode {
    // configuration
    ConfigInvalid,
    // ingestion
    UnreadablePdf,
    NoPages,
    OcrUnavailable,
    RenderFailure,
    DuplicateDocId,
    MissingSource,
    CorpusLocked,
    CorpusInvalid,
    // retrieval
    DimensionMismatch,
    EmbedderUnreachable,
    EmbedderDimDrift,
    IndexCorrupt,
    // gateway
    Transport,
    ApiError,
    EmptyCompletion,
    ShapeError,
    // agents / evaluation
    CriticalParseFailure,
    JudgeParseFailure,
    DatasetInvalid,
    ItemSetMismatch,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> error_code_from_string(std::string_view name);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);
    Error(ErrorCode code, const std::string& message, int http_status, std::string body);

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

    /// Set for ApiError only.
    std::optional<int> http_status() const noexcept { return http_status_; }
    const std::string& body() const noexcept { return body_; }

    /// Copy of this error with `context: ` prefixed to the message.
    Error annotated(std::string_view context) const;

private:
    ErrorCode code_;
    std::optional<int> http_status_;
    std::string body_;
};

} // namespace polydoc
