#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydoc/ingest.hpp"
#include "polydoc/retrieval.hpp"

namespace polydoc::gateway {

constexpr int kDefaultMaxNewTokens = 256;

struct ModelEndpoint {
    std::string base_url;    // e.g. http://localhost:8000/v1
    std::string model_name;  // may be empty for the embedding sidecar
    std::string api_key_env; // name of the variable holding the bearer key; empty = no auth
    double timeout_s = 60;
    int max_retries = 2;
    size_t max_concurrency = 4;
    double backoff_initial_s = 0.5;
    double backoff_max_s = 8;
    /// Merged verbatim into every chat request body (provider-specific knobs,
    /// e.g. a per-image token budget).
    nlohmann::json extra_body = nlohmann::json::object();
    /// Images larger than this many pixels are downscaled before encoding.
    std::optional<int64_t> max_image_pixels;

    /// "<base_url> <model>"; never contains the secret.
    std::string label() const;
};

struct TextPart {
    std::string text;
};

struct ImagePart {
    std::string data; // raw encoded bytes
    std::string media_type = "image/png";
};

using Part = std::variant<TextPart, ImagePart>;

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);

struct ChatMessage {
    Role role = Role::User;
    std::vector<Part> parts;

    static ChatMessage system(std::string text);
    static ChatMessage user(std::vector<Part> parts);
    static ChatMessage assistant(std::string text);
};

struct GenerationParams {
    int max_new_tokens = kDefaultMaxNewTokens;
    std::optional<double> temperature; // absent = provider default
};

/// Per-call metadata destined for the call log. Secrets are never included.
struct CallMeta {
    std::string endpoint;
    double latency_ms = 0;
    int retry_count = 0;
    int http_status = 0;
};

struct ChatResult {
    std::string text;
    CallMeta meta;
};

/// Validates messages and builds an OpenAI-compatible chat completions body.
/// Throws ConfigInvalid for empty message lists, empty messages or images
/// outside user messages.
nlohmann::json build_chat_request(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                                  const GenerationParams& params);

/// Extracts choices[0].message.content. Throws EmptyCompletion when it is
/// missing or blank, ShapeError when the body is not a chat completion.
std::string parse_chat_response(const std::string& body);

/// Downscales an encoded image to at most `max_pixels` (aspect preserved) and
/// re-encodes as PNG. Returns the input untouched when it is already small
/// enough or cannot be decoded.
std::string downscale_image(const std::string& encoded, int64_t max_pixels);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                                const GenerationParams& params) = 0;
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;
using Sleeper = std::function<void(std::chrono::duration<double>)>;

struct RetryPolicyOptions {
    uint64_t seed = 0; // backoff jitter seed
    Clock clock;       // defaults to steady_clock::now
    Sleeper sleep;     // defaults to this_thread::sleep_for
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// One HTTP exchange: POST when `body` is set, GET otherwise. Throws Transport
/// on connection failure or timeout.
HttpResponse http_request(const std::string& base_url, const std::string& path, const std::optional<std::string>& body,
                          const std::string& bearer, double timeout_s);

/// Runs `attempt` with the endpoint's retry policy: 429, 5xx and Transport
/// failures are retried with jittered exponential backoff, and the whole call
/// never runs longer than (max_retries + 1) × timeout. Other non-2xx statuses
/// raise ApiError immediately. Each attempt receives its own timeout budget.
HttpResponse call_with_retries(const ModelEndpoint& endpoint, const RetryPolicyOptions& options,
                               const std::function<HttpResponse(double timeout_s)>& attempt, int* retry_count);

/// Chat over HTTP with bounded per-endpoint concurrency.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(RetryPolicyOptions options = {});
    ~HttpChatBackend() override;

    ChatResult complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                        const GenerationParams& params) override;

    /// Number of HTTP attempts made so far, including retries.
    uint64_t attempts() const noexcept { return attempts_.load(); }

private:
    struct State;
    RetryPolicyOptions options_;
    std::atomic<uint64_t> attempts_{0};
    std::atomic<uint64_t> call_seq_{0};
    std::unique_ptr<State> state_;
};

/// Client for the embedding and OCR sidecar.
///   GET  {base}/health       -> {"status", "embedder_id", "dim"}
///   POST {base}/embed/text   {"texts": [...], "kind": "query"|"document"}
///   POST {base}/embed/image  {"images": [base64 PNG, ...]}
///        -> {"embedder_id", "dim", "matrices": [[[float]]]}
///   POST {base}/ocr          {"image": base64 PNG} -> {"text"}
class SidecarClient : public retrieval::EmbeddingClient, public ingest::OcrClient {
public:
    explicit SidecarClient(ModelEndpoint endpoint, RetryPolicyOptions options = {});

    retrieval::EmbedderInfo info() override;
    std::vector<retrieval::TokenEmbeddingMatrix> embed_texts(const std::vector<std::string>& texts,
                                                             retrieval::EmbedKind kind) override;
    std::vector<retrieval::TokenEmbeddingMatrix> embed_images(const std::vector<std::string>& pngs) override;
    std::string ocr(const std::string& png) override;

    uint64_t requests() const noexcept { return requests_.load(); }

private:
    nlohmann::json request(const std::string& path, const std::optional<nlohmann::json>& body);

    ModelEndpoint endpoint_;
    RetryPolicyOptions options_;
    std::atomic<uint64_t> requests_{0};
};

/// Validates an embed response. Throws ShapeError on count, row or dim violations.
std::vector<retrieval::TokenEmbeddingMatrix> parse_embed_response(const nlohmann::json& reply, size_t expected);

} // namespace polydoc::gateway
