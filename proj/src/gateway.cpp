#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "polydoc/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <semaphore>
#include <thread>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

using nlohmann::json;

namespace polydoc::gateway {

std::string ModelEndpoint::label() const { return model_name.empty() ? base_url : base_url + " " + model_name; }

std::string_view to_string(Role r) {
    switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

ChatMessage ChatMessage::system(std::string text) { return {Role::System, {TextPart{std::move(text)}}}; }
ChatMessage ChatMessage::user(std::vector<Part> parts) { return {Role::User, std::move(parts)}; }
ChatMessage ChatMessage::assistant(std::string text) { return {Role::Assistant, {TextPart{std::move(text)}}}; }

std::string downscale_image(const std::string& encoded, int64_t max_pixels) {
    if (max_pixels <= 0) return encoded;
    std::vector<uchar> buf(encoded.begin(), encoded.end());
    cv::Mat img = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    if (img.empty()) return encoded;
    int64_t pixels = static_cast<int64_t>(img.cols) * img.rows;
    if (pixels <= max_pixels) return encoded;
    double f = std::sqrt(static_cast<double>(max_pixels) / static_cast<double>(pixels));
    int w = std::max(1, static_cast<int>(std::floor(img.cols * f)));
    int h = std::max(1, static_cast<int>(std::floor(img.rows * f)));
    cv::Mat small;
    cv::resize(img, small, cv::Size(w, h), 0, 0, cv::INTER_AREA);
    std::vector<uchar> out;
    if (!cv::imencode(".png", small, out)) return encoded;
    return std::string(out.begin(), out.end());
}

json build_chat_request(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                        const GenerationParams& params) {
    if (messages.empty()) throw Error(ErrorCode::ConfigInvalid, "chat request needs at least one message");
    if (params.max_new_tokens < 1) throw Error(ErrorCode::ConfigInvalid, "max_new_tokens must be at least 1");
    json body;
    body["model"] = endpoint.model_name;
    json& msgs = body["messages"] = json::array();
    for (const ChatMessage& m : messages) {
        if (m.parts.empty()) throw Error(ErrorCode::ConfigInvalid, "chat message has no parts");
        bool has_image = std::any_of(m.parts.begin(), m.parts.end(), [](const Part& p) { return std::holds_alternative<ImagePart>(p); });
        if (has_image && m.role != Role::User)
            throw Error(ErrorCode::ConfigInvalid, "image parts are only allowed in user messages");
        json jm;
        jm["role"] = to_string(m.role);
        if (!has_image && (m.role != Role::User || m.parts.size() == 1)) {
            std::string text;
            for (const Part& p : m.parts) text += std::get<TextPart>(p).text;
            jm["content"] = text;
        } else {
            json content = json::array();
            for (const Part& p : m.parts) {
                if (const auto* t = std::get_if<TextPart>(&p)) {
                    content.push_back({{"type", "text"}, {"text", t->text}});
                } else {
                    const auto& img = std::get<ImagePart>(p);
                    std::string data = img.data;
                    std::string media = img.media_type;
                    if (endpoint.max_image_pixels) {
                        std::string scaled = downscale_image(data, *endpoint.max_image_pixels);
                        if (scaled.size() != data.size() || scaled != data) media = "image/png";
                        data = std::move(scaled);
                    }
                    content.push_back({{"type", "image_url"},
                                       {"image_url", {{"url", "data:" + media + ";base64," + util::base64_encode(data)}}}});
                }
            }
            jm["content"] = std::move(content);
        }
        msgs.push_back(std::move(jm));
    }
    body["max_tokens"] = params.max_new_tokens;
    if (params.temperature) body["temperature"] = *params.temperature;
    if (endpoint.extra_body.is_object())
        for (const auto& [k, v] : endpoint.extra_body.items()) body[k] = v;
    return body;
}

std::string parse_chat_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        throw Error(ErrorCode::ShapeError, "chat response is not JSON");
    }
    if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array())
        throw Error(ErrorCode::ShapeError, "chat response has no choices array");
    if (j["choices"].empty()) throw Error(ErrorCode::EmptyCompletion, "chat response has no choices");
    const json& choice = j["choices"][0];
    if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object())
        throw Error(ErrorCode::ShapeError, "chat choice has no message");
    const json& content = choice["message"].value("content", json());
    std::string text;
    if (content.is_string()) {
        text = content.get<std::string>();
    } else if (content.is_array()) {
        // Some servers answer with a list of content parts.
        for (const json& p : content)
            if (p.is_object() && p.value("type", "") == "text" && p.contains("text") && p["text"].is_string())
                text += p["text"].get<std::string>();
    }
    if (util::trim(text).empty()) throw Error(ErrorCode::EmptyCompletion, "chat completion content is empty");
    return text;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string path_prefix;
};

ParsedUrl parse_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigInvalid, "base_url '" + url + "' has no scheme");
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw Error(ErrorCode::ConfigInvalid, "base_url '" + url + "' must be http or https");
    auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl p;
    p.scheme_host_port = url.substr(0, path_start);
    if (p.scheme_host_port.size() <= scheme_end + 3) throw Error(ErrorCode::ConfigInvalid, "base_url '" + url + "' has no host");
    p.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!p.path_prefix.empty() && p.path_prefix.back() == '/') p.path_prefix.pop_back();
    return p;
}

std::string bearer_for(const ModelEndpoint& endpoint) {
    if (endpoint.api_key_env.empty()) return {};
    const char* v = std::getenv(endpoint.api_key_env.c_str());
    if (!v || !*v) throw Error(ErrorCode::ConfigInvalid, "environment variable " + endpoint.api_key_env + " is not set");
    return v;
}

bool transient(int status) { return status == 429 || status >= 500; }

template <typename D> std::chrono::steady_clock::duration to_steady(D d) {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(d);
}

} // namespace

HttpResponse http_request(const std::string& base_url, const std::string& path, const std::optional<std::string>& body,
                          const std::string& bearer, double timeout_s) {
    ParsedUrl url = parse_url(base_url);
    httplib::Client cli(url.scheme_host_port);
    auto t = std::chrono::duration<double>(timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);

    // Socket timeouts bound each read, not the whole exchange; the watchdog
    // enforces the wall-clock budget against slow-drip servers.
    std::mutex mu;
    std::condition_variable cv;
    bool finished = false;
    bool fired = false;
    std::jthread watchdog([&] {
        std::unique_lock lock(mu);
        if (!cv.wait_for(lock, t, [&] { return finished; })) {
            fired = true;
            cli.stop();
        }
    });

    httplib::Result res = body ? cli.Post(url.path_prefix + path, headers, *body, "application/json")
                               : cli.Get(url.path_prefix + path, headers);
    {
        std::lock_guard lock(mu);
        finished = true;
    }
    cv.notify_all();
    watchdog.join();

    if (!res || fired) {
        std::string why = fired ? "timed out" : httplib::to_string(res.error());
        throw Error(ErrorCode::Transport, base_url + path + ": " + why);
    }
    return {res->status, res->body};
}

HttpResponse call_with_retries(const ModelEndpoint& endpoint, const RetryPolicyOptions& options,
                               const std::function<HttpResponse(double)>& attempt, int* retry_count) {
    using namespace std::chrono;
    if (endpoint.timeout_s <= 0) throw Error(ErrorCode::ConfigInvalid, "timeout must be positive");
    auto now = [&] { return options.clock ? options.clock() : steady_clock::now(); };
    auto sleep = [&](duration<double> d) {
        if (options.sleep) options.sleep(d);
        else std::this_thread::sleep_for(d);
    };
    const int max_retries = std::max(0, endpoint.max_retries);
    const auto deadline = now() + to_steady(duration<double>(endpoint.timeout_s * (max_retries + 1)));
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> jitter(0.5, 1.0);

    int retries = 0;
    std::optional<HttpResponse> last_response;
    std::string last_error = "no attempt made";
    for (int i = 0; i <= max_retries; ++i) {
        double remaining = duration<double>(deadline - now()).count();
        if (remaining <= 0) break;
        try {
            HttpResponse r = attempt(std::min(endpoint.timeout_s, remaining));
            if (r.status >= 200 && r.status < 300) {
                if (retry_count) *retry_count = retries;
                return r;
            }
            if (!transient(r.status))
                throw Error(ErrorCode::ApiError, endpoint.label() + " returned HTTP " + std::to_string(r.status), r.status, r.body);
            last_error = "HTTP " + std::to_string(r.status);
            last_response = std::move(r);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Transport) throw;
            last_error = e.what();
            last_response.reset();
        }
        if (i == max_retries) break;
        double backoff = std::min(endpoint.backoff_max_s, endpoint.backoff_initial_s * std::pow(2.0, i)) * jitter(rng);
        if (now() + to_steady(duration<double>(backoff)) >= deadline) break;
        spdlog::debug("retrying {} in {:.2f}s after {}", endpoint.label(), backoff, last_error);
        sleep(duration<double>(backoff));
        ++retries;
    }
    if (retry_count) *retry_count = retries;
    if (last_response)
        throw Error(ErrorCode::ApiError,
                    endpoint.label() + " returned HTTP " + std::to_string(last_response->status) + " after " +
                        std::to_string(retries) + " retries",
                    last_response->status, last_response->body);
    throw Error(ErrorCode::Transport, endpoint.label() + ": " + last_error + " (" + std::to_string(retries) + " retries)");
}

// ---------------------------------------------------------------------------
// Chat backend

struct HttpChatBackend::State {
    std::mutex mu;
    std::map<std::string, std::unique_ptr<std::counting_semaphore<1024>>> limits;

    std::counting_semaphore<1024>& limiter(const ModelEndpoint& e) {
        std::lock_guard lock(mu);
        auto& slot = limits[e.label()];
        if (!slot) {
            auto n = static_cast<std::ptrdiff_t>(std::clamp<size_t>(e.max_concurrency, 1, 1024));
            slot = std::make_unique<std::counting_semaphore<1024>>(n);
        }
        return *slot;
    }
};

HttpChatBackend::HttpChatBackend(RetryPolicyOptions options)
    : options_(std::move(options)), state_(std::make_unique<State>()) {}

HttpChatBackend::~HttpChatBackend() = default;

ChatResult HttpChatBackend::complete(const ModelEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                                     const GenerationParams& params) {
    std::string body = build_chat_request(endpoint, messages, params).dump();
    std::string bearer = bearer_for(endpoint);
    RetryPolicyOptions opts = options_;
    opts.seed = options_.seed + call_seq_++;

    auto& sem = state_->limiter(endpoint);
    sem.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{sem};

    auto now = [&] { return options_.clock ? options_.clock() : std::chrono::steady_clock::now(); };
    auto start = now();
    ChatResult out;
    HttpResponse r = call_with_retries(
        endpoint, opts,
        [&](double timeout) {
            ++attempts_;
            return http_request(endpoint.base_url, "/chat/completions", body, bearer, timeout);
        },
        &out.meta.retry_count);
    out.meta.latency_ms = std::chrono::duration<double, std::milli>(now() - start).count();
    out.meta.endpoint = endpoint.label();
    out.meta.http_status = r.status;
    out.text = parse_chat_response(r.body);
    return out;
}

// ---------------------------------------------------------------------------
// Sidecar

std::vector<retrieval::TokenEmbeddingMatrix> parse_embed_response(const json& reply, size_t expected) {
    if (!reply.is_object() || !reply.contains("matrices") || !reply["matrices"].is_array())
        throw Error(ErrorCode::ShapeError, "embed response has no matrices array");
    const json& mats = reply["matrices"];
    if (mats.size() != expected)
        throw Error(ErrorCode::ShapeError,
                    "embed response has " + std::to_string(mats.size()) + " matrices for " + std::to_string(expected) + " inputs");
    size_t dim = reply.contains("dim") && reply["dim"].is_number_unsigned() ? reply["dim"].get<size_t>() : 0;
    std::vector<retrieval::TokenEmbeddingMatrix> out;
    out.reserve(mats.size());
    for (size_t i = 0; i < mats.size(); ++i) {
        const json& m = mats[i];
        if (!m.is_array() || m.empty()) throw Error(ErrorCode::ShapeError, "matrix " + std::to_string(i) + " has no rows");
        std::vector<float> values;
        for (const json& row : m) {
            if (!row.is_array() || row.empty()) throw Error(ErrorCode::ShapeError, "matrix " + std::to_string(i) + " has an empty row");
            if (dim == 0) dim = row.size();
            if (row.size() != dim)
                throw Error(ErrorCode::ShapeError, "matrix " + std::to_string(i) + " row has " + std::to_string(row.size()) +
                                                       " values, expected dim " + std::to_string(dim));
            for (const json& v : row) {
                if (!v.is_number()) throw Error(ErrorCode::ShapeError, "matrix " + std::to_string(i) + " has a non-numeric value");
                values.push_back(v.get<float>());
            }
        }
        out.emplace_back(m.size(), dim, std::move(values));
    }
    return out;
}

SidecarClient::SidecarClient(ModelEndpoint endpoint, RetryPolicyOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {}

json SidecarClient::request(const std::string& path, const std::optional<json>& body) {
    std::optional<std::string> payload;
    if (body) payload = body->dump();
    std::string bearer = bearer_for(endpoint_);
    RetryPolicyOptions opts = options_;
    opts.seed = options_.seed + requests_++;
    HttpResponse r = call_with_retries(
        endpoint_, opts, [&](double timeout) { return http_request(endpoint_.base_url, path, payload, bearer, timeout); },
        nullptr);
    try {
        return json::parse(r.body);
    } catch (const json::exception&) {
        throw Error(ErrorCode::ShapeError, endpoint_.base_url + path + " returned a non-JSON body");
    }
}

retrieval::EmbedderInfo SidecarClient::info() {
    json j = request("/health", std::nullopt);
    if (!j.is_object() || !j.contains("embedder_id") || !j["embedder_id"].is_string())
        throw Error(ErrorCode::ShapeError, "health response has no embedder_id");
    retrieval::EmbedderInfo info;
    info.embedder_id = j["embedder_id"].get<std::string>();
    if (j.contains("dim") && j["dim"].is_number_unsigned()) info.dim = j["dim"].get<size_t>();
    return info;
}

std::vector<retrieval::TokenEmbeddingMatrix> SidecarClient::embed_texts(const std::vector<std::string>& texts,
                                                                        retrieval::EmbedKind kind) {
    if (texts.empty()) throw Error(ErrorCode::ConfigInvalid, "embed batch must not be empty");
    json body = {{"texts", texts}, {"kind", kind == retrieval::EmbedKind::Query ? "query" : "document"}};
    return parse_embed_response(request("/embed/text", body), texts.size());
}

std::vector<retrieval::TokenEmbeddingMatrix> SidecarClient::embed_images(const std::vector<std::string>& pngs) {
    if (pngs.empty()) throw Error(ErrorCode::ConfigInvalid, "embed batch must not be empty");
    json images = json::array();
    for (const auto& p : pngs) images.push_back(util::base64_encode(p));
    return parse_embed_response(request("/embed/image", json{{"images", std::move(images)}}), pngs.size());
}

std::string SidecarClient::ocr(const std::string& png) {
    json j = request("/ocr", json{{"image", util::base64_encode(png)}});
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
        throw Error(ErrorCode::ShapeError, "OCR response has no text field");
    return j["text"].get<std::string>();
}

} // namespace polydoc::gateway
