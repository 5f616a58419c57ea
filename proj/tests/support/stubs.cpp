#include "stubs.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "polydoc/util.hpp"

using nlohmann::json;

namespace polydoc::testing {

namespace {

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<float> unit_row(uint64_t seed, size_t dim) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> v(dim);
    double norm = 0;
    for (auto& x : v) {
        x = n(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> out;
    for (double x : v) out.push_back(static_cast<float>(x / norm));
    return out;
}

constexpr std::string_view kJudgeMarker = "**Predicted Answer**:";

std::string default_reply(const std::string& role) {
    if (role == "general") return "prelim general";
    if (role == "critical") return R"({"text": "T-hint", "image": "I-hint"})";
    if (role == "text") return "text answer";
    if (role == "image") return "image answer";
    if (role == "summarizing") return R"({"Answer": "final"})";
    if (role == "judge") return R"({"correctness": 1})";
    return "OK";
}

} // namespace

retrieval::TokenEmbeddingMatrix hash_embedding(const std::string& text, size_t dim, size_t max_rows) {
    std::vector<float> values;
    size_t rows = 0;
    std::istringstream in(text);
    for (std::string tok; in >> tok && rows < max_rows;) {
        std::string norm;
        for (char c : tok)
            if (std::isalnum(static_cast<unsigned char>(c))) norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (norm.empty()) continue;
        auto row = unit_row(fnv1a(norm), dim);
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) {
        auto row = unit_row(fnv1a("<empty>"), dim);
        values.insert(values.end(), row.begin(), row.end());
        rows = 1;
    }
    return {rows, dim, std::move(values)};
}

retrieval::TokenEmbeddingMatrix bytes_embedding(const std::string& bytes, size_t dim, size_t rows) {
    uint64_t seed = fnv1a(bytes);
    std::vector<float> values;
    for (size_t r = 0; r < rows; ++r) {
        auto row = unit_row(seed + r, dim);
        values.insert(values.end(), row.begin(), row.end());
    }
    return {rows, dim, std::move(values)};
}

json matrix_json(const retrieval::TokenEmbeddingMatrix& m) {
    json rows = json::array();
    for (size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        rows.push_back(std::vector<float>(r.begin(), r.end()));
    }
    return rows;
}

std::string detect_role(const std::vector<gateway::ChatMessage>& messages) {
    for (const auto& m : messages) {
        if (m.role != gateway::Role::System) continue;
        for (const auto& p : m.parts) {
            const auto* t = std::get_if<gateway::TextPart>(&p);
            if (!t) continue;
            for (agents::AgentRole r : agents::kAllRoles)
                if (t->text == agents::default_prompt(r)) return std::string(agents::to_string(r));
            return "custom";
        }
    }
    for (const auto& m : messages)
        for (const auto& p : m.parts)
            if (const auto* t = std::get_if<gateway::TextPart>(&p); t && t->text.find(kJudgeMarker) != std::string::npos)
                return "judge";
    return "unknown";
}

std::string detect_role(const json& body) {
    std::vector<gateway::ChatMessage> messages;
    for (const auto& m : body.at("messages")) {
        std::string role = m.at("role");
        gateway::ChatMessage msg;
        msg.role = role == "system" ? gateway::Role::System : role == "assistant" ? gateway::Role::Assistant : gateway::Role::User;
        const json& c = m.at("content");
        if (c.is_string()) {
            msg.parts.emplace_back(gateway::TextPart{c.get<std::string>()});
        } else {
            for (const auto& p : c)
                if (p.value("type", "") == "text") msg.parts.emplace_back(gateway::TextPart{p.at("text").get<std::string>()});
        }
        messages.push_back(std::move(msg));
    }
    return detect_role(messages);
}

std::string last_user_text(const std::vector<gateway::ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role != gateway::Role::User) continue;
        std::string out;
        for (const auto& p : it->parts)
            if (const auto* t = std::get_if<gateway::TextPart>(&p)) out += (out.empty() ? "" : "\n") + t->text;
        return out;
    }
    return {};
}

std::string last_user_text(const json& body) {
    const json& msgs = body.at("messages");
    for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
        if ((*it).at("role") != "user") continue;
        const json& c = (*it).at("content");
        if (c.is_string()) return c.get<std::string>();
        std::string out;
        for (const auto& p : c)
            if (p.value("type", "") == "text") out += (out.empty() ? "" : "\n") + p.at("text").get<std::string>();
        return out;
    }
    return {};
}

size_t image_part_count(const std::vector<gateway::ChatMessage>& messages) {
    size_t n = 0;
    for (const auto& m : messages)
        for (const auto& p : m.parts) n += std::holds_alternative<gateway::ImagePart>(p);
    return n;
}

// ---------------------------------------------------------------------------

StubServer::StubServer() : server_(std::make_unique<httplib::Server>()) {}

StubServer::~StubServer() { stop(); }

void StubServer::start() {
    port_ = server_->bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("stub server could not bind");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void StubServer::stop() {
    if (thread_.joinable()) {
        server_->stop();
        thread_.join();
    }
}

std::string StubServer::url(const std::string& prefix) const { return "http://127.0.0.1:" + std::to_string(port_) + prefix; }

// ---------------------------------------------------------------------------

ChatStub::ChatStub() {
    server_.server().Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("messages")) {
            res.status = 400;
            res.set_content(R"({"error": "bad request"})", "application/json");
            return;
        }
        std::string role = detect_role(body);
        ScriptedReply r;
        {
            std::lock_guard lock(mu_);
            requests_.push_back({role, body, req.get_header_value("Authorization")});
            r = next(role, body);
        }
        ++count_;
        if (r.delay_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(r.delay_s));
        res.status = r.status;
        if (!r.raw_body.empty()) {
            res.set_content(r.raw_body, "application/json");
        } else if (r.status == 200) {
            json reply = {{"id", "stub"},
                          {"object", "chat.completion"},
                          {"choices", json::array({{{"index", 0},
                                                    {"message", {{"role", "assistant"}, {"content", r.content}}},
                                                    {"finish_reason", "stop"}}})}};
            res.set_content(reply.dump(), "application/json");
        } else {
            res.set_content(R"({"error": {"message": "scripted failure"}})", "application/json");
        }
    });
    server_.start();
}

ChatStub::~ChatStub() { server_.stop(); }

ScriptedReply ChatStub::next(const std::string& role, const json& body) {
    if (auto it = queued_.find(role); it != queued_.end() && !it->second.empty()) {
        ScriptedReply r = it->second.front();
        it->second.pop_front();
        return r;
    }
    if (auto it = fixed_.find(role); it != fixed_.end()) return {200, it->second, {}, 0};
    if (fallback) return fallback(role, body);
    return {200, default_reply(role), {}, 0};
}

void ChatStub::set_reply(const std::string& role, std::string content) {
    std::lock_guard lock(mu_);
    fixed_[role] = std::move(content);
}

void ChatStub::queue(const std::string& role, ScriptedReply reply) {
    std::lock_guard lock(mu_);
    queued_[role].push_back(std::move(reply));
}

gateway::ModelEndpoint ChatStub::endpoint(const std::string& model) const {
    gateway::ModelEndpoint e;
    e.base_url = base_url();
    e.model_name = model;
    e.timeout_s = 5;
    e.max_retries = 2;
    e.backoff_initial_s = 0.01;
    e.backoff_max_s = 0.05;
    return e;
}

std::vector<ChatStub::Request> ChatStub::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

void ChatStub::clear() {
    std::lock_guard lock(mu_);
    requests_.clear();
    count_ = 0;
}

// ---------------------------------------------------------------------------

SidecarStub::SidecarStub(std::string embedder_id, size_t dim) : embedder_id_(std::move(embedder_id)), dim_(dim) {
    auto& srv = server_.server();
    auto record = [this](const std::string& path) {
        std::lock_guard lock(mu_);
        paths_.push_back(path);
        ++count_;
    };
    srv.Get("/v1/health", [this, record](const httplib::Request&, httplib::Response& res) {
        record("/health");
        res.set_content(json{{"status", "ready"}, {"embedder_id", embedder_id_}, {"dim", dim_}}.dump(), "application/json");
    });
    auto embed_reply = [this](std::vector<retrieval::TokenEmbeddingMatrix> mats, httplib::Response& res) {
        ++embed_count_;
        json raw;
        size_t dim = dim_;
        {
            std::lock_guard lock(mu_);
            if (!raw_replies.empty()) {
                raw = raw_replies.front();
                raw_replies.pop_front();
            }
            if (!dim_overrides.empty()) {
                dim = dim_overrides.front();
                dim_overrides.pop_front();
            }
        }
        if (!raw.is_null()) {
            res.set_content(raw.dump(), "application/json");
            return;
        }
        json out = json::array();
        for (auto& m : mats) {
            if (dim != m.dim()) {
                std::vector<float> v;
                for (size_t i = 0; i < m.rows(); ++i)
                    for (size_t j = 0; j < dim; ++j) v.push_back(j < m.dim() ? m.row(i)[j] : 0.0f);
                m = retrieval::TokenEmbeddingMatrix(m.rows(), dim, std::move(v));
            }
            out.push_back(matrix_json(m));
        }
        res.set_content(json{{"embedder_id", embedder_id_}, {"dim", dim}, {"matrices", out}}.dump(), "application/json");
    };
    srv.Post("/v1/embed/text", [this, record, embed_reply](const httplib::Request& req, httplib::Response& res) {
        record("/embed/text");
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("texts") || !body["texts"].is_array()) {
            res.status = 422;
            return;
        }
        std::string kind = body.value("kind", "document");
        std::vector<retrieval::TokenEmbeddingMatrix> mats;
        for (const auto& t : body["texts"])
            mats.push_back(text_embed ? text_embed(t.get<std::string>(), kind) : hash_embedding(t.get<std::string>(), dim_));
        embed_reply(std::move(mats), res);
    });
    srv.Post("/v1/embed/image", [this, record, embed_reply](const httplib::Request& req, httplib::Response& res) {
        record("/embed/image");
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("images") || !body["images"].is_array()) {
            res.status = 422;
            return;
        }
        std::vector<retrieval::TokenEmbeddingMatrix> mats;
        for (const auto& b64 : body["images"]) {
            auto png = util::base64_decode(b64.get<std::string>());
            if (!png) {
                res.status = 422;
                return;
            }
            mats.push_back(image_embed ? image_embed(*png) : bytes_embedding(*png, dim_));
        }
        embed_reply(std::move(mats), res);
    });
    srv.Post("/v1/ocr", [this, record](const httplib::Request& req, httplib::Response& res) {
        record("/ocr");
        json body = json::parse(req.body, nullptr, false);
        auto png = body.is_discarded() ? std::nullopt : util::base64_decode(body.value("image", ""));
        if (!png) {
            res.status = 422;
            return;
        }
        res.set_content(json{{"text", ocr ? ocr(*png) : std::string()}}.dump(), "application/json");
    });
    server_.start();
}

SidecarStub::~SidecarStub() { server_.stop(); }

gateway::ModelEndpoint SidecarStub::endpoint() const {
    gateway::ModelEndpoint e;
    e.base_url = base_url();
    e.timeout_s = 5;
    e.max_retries = 1;
    e.backoff_initial_s = 0.01;
    e.backoff_max_s = 0.02;
    return e;
}

std::vector<std::string> SidecarStub::paths() const {
    std::lock_guard lock(mu_);
    return paths_;
}

// ---------------------------------------------------------------------------

gateway::ChatResult FakeChat::complete(const gateway::ModelEndpoint& endpoint,
                                       const std::vector<gateway::ChatMessage>& messages,
                                       const gateway::GenerationParams& params) {
    std::string role = detect_role(messages);
    std::string text;
    {
        std::lock_guard lock(mu_);
        calls_.push_back({role, messages, params, endpoint.label()});
        if (auto it = queued.find(role); it != queued.end() && !it->second.empty()) {
            text = it->second.front();
            it->second.pop_front();
        } else if (auto f = fixed.find(role); f != fixed.end()) {
            text = f->second;
        } else if (reply) {
            text = reply(role, messages);
        } else {
            text = default_reply(role);
        }
    }
    return {text, {endpoint.label(), 0, 0, 200}};
}

std::vector<FakeChat::Call> FakeChat::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

size_t FakeChat::call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
}

std::vector<std::string> FakeChat::roles() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& c : calls_) out.push_back(c.role);
    return out;
}

// ---------------------------------------------------------------------------

retrieval::TokenEmbeddingMatrix FakeEmbedder::resize(const retrieval::TokenEmbeddingMatrix& m) {
    size_t dim = dim_;
    {
        std::lock_guard lock(mu_);
        if (!dim_sequence.empty()) dim = dim_sequence.front();
    }
    if (dim == m.dim()) return m;
    std::vector<float> v;
    for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < dim; ++j) v.push_back(j < m.dim() ? m.row(i)[j] : 0.5f);
    return {m.rows(), dim, std::move(v)};
}

std::vector<retrieval::TokenEmbeddingMatrix> FakeEmbedder::embed_texts(const std::vector<std::string>& texts,
                                                                       retrieval::EmbedKind) {
    ++calls_;
    items_ += texts.size();
    std::vector<retrieval::TokenEmbeddingMatrix> out;
    for (const auto& t : texts) {
        auto it = text_table.find(t);
        out.push_back(resize(it != text_table.end() ? it->second : hash_embedding(t, dim_)));
    }
    std::lock_guard lock(mu_);
    if (!dim_sequence.empty()) dim_sequence.pop_front();
    return out;
}

std::vector<retrieval::TokenEmbeddingMatrix> FakeEmbedder::embed_images(const std::vector<std::string>& pngs) {
    ++calls_;
    items_ += pngs.size();
    std::vector<retrieval::TokenEmbeddingMatrix> out;
    for (const auto& p : pngs) {
        auto it = image_table.find(p);
        out.push_back(resize(it != image_table.end() ? it->second : bytes_embedding(p, dim_)));
    }
    std::lock_guard lock(mu_);
    if (!dim_sequence.empty()) dim_sequence.pop_front();
    return out;
}

} // namespace polydoc::testing
