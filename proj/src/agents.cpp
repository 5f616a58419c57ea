#include "polydoc/agents.hpp"

#include <cctype>

#include <spdlog/spdlog.h>

#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

using nlohmann::json;

namespace polydoc::agents {

namespace assets {
extern const std::string_view kGeneral;
extern const std::string_view kCritical;
extern const std::string_view kText;
extern const std::string_view kImage;
extern const std::string_view kSummarizing;
extern const std::string_view kEvaluation;
} // namespace assets

std::string_view to_string(AgentRole role) {
    switch (role) {
    case AgentRole::General: return "general";
    case AgentRole::Critical: return "critical";
    case AgentRole::Text: return "text";
    case AgentRole::Image: return "image";
    case AgentRole::Summarizing: return "summarizing";
    }
    return "general";
}

std::optional<AgentRole> role_from_string(std::string_view name) {
    for (AgentRole r : kAllRoles)
        if (to_string(r) == name) return r;
    return std::nullopt;
}

std::string_view default_prompt(AgentRole role) {
    switch (role) {
    case AgentRole::General: return assets::kGeneral;
    case AgentRole::Critical: return assets::kCritical;
    case AgentRole::Text: return assets::kText;
    case AgentRole::Image: return assets::kImage;
    case AgentRole::Summarizing: return assets::kSummarizing;
    }
    return assets::kGeneral;
}

std::string_view default_evaluation_prompt() { return assets::kEvaluation; }

std::string fill_evaluation_prompt(std::string_view tmpl, std::string_view question, std::string_view answer,
                                   std::string_view ground_truth) {
    const std::pair<std::string_view, std::string_view> slots[] = {
        {"{question}", question}, {"{answer}", answer}, {"{gt}", ground_truth}};
    std::string out;
    size_t i = 0;
    while (i < tmpl.size()) {
        bool replaced = false;
        for (const auto& [slot, value] : slots) {
            if (tmpl.substr(i, slot.size()) == slot) {
                out += value;
                i += slot.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) out += tmpl[i++];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

/// A quote opens a string only at a token boundary, so apostrophes inside
/// bare words ("it's") do not.
bool opens_string(std::string_view s, size_t i) {
    if (s[i] == '"') return true;
    size_t j = i;
    while (j > 0 && std::isspace(static_cast<unsigned char>(s[j - 1]))) --j;
    if (j == 0) return true;
    char p = s[j - 1];
    return p == '{' || p == '[' || p == ',' || p == ':';
}

/// Index of the '}' closing the '{' at `start`, or npos.
size_t match_brace(std::string_view s, size_t start) {
    int depth = 0;
    for (size_t i = start; i < s.size(); ++i) {
        char c = s[i];
        if ((c == '"' || c == '\'') && opens_string(s, i)) {
            char q = c;
            for (++i; i < s.size() && s[i] != q; ++i)
                if (s[i] == '\\') ++i;
            if (i >= s.size()) return std::string_view::npos;
            continue;
        }
        if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i;
    }
    return std::string_view::npos;
}

/// Calls `fn` on each balanced candidate in order of its opening brace; stops when it returns true.
template <typename Fn> void for_each_candidate(std::string_view s, Fn&& fn) {
    for (size_t i = s.find('{'); i != std::string_view::npos; i = s.find('{', i + 1)) {
        size_t end = match_brace(s, i);
        if (end != std::string_view::npos && fn(s.substr(i, end - i + 1))) return;
    }
}

/// Rewrites a Python dict literal (single quotes, True/False/None) as JSON.
std::optional<std::string> python_to_json(std::string_view s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\'' || c == '"') {
            char q = c;
            out += '"';
            for (++i; i < s.size() && s[i] != q; ++i) {
                if (s[i] == '\\' && i + 1 < s.size()) {
                    char n = s[++i];
                    if (n == '\'') out += '\'';
                    else {
                        out += '\\';
                        out += n;
                    }
                } else if (s[i] == '"') {
                    out += "\\\"";
                } else {
                    out += s[i];
                }
            }
            if (i >= s.size()) return std::nullopt;
            out += '"';
        } else if (std::isalpha(static_cast<unsigned char>(c))) {
            size_t j = i;
            while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
            std::string_view word = s.substr(i, j - i);
            if (word == "True") out += "true";
            else if (word == "False") out += "false";
            else if (word == "None") out += "null";
            else out += word;
            i = j - 1;
        } else {
            out += c;
        }
    }
    return out;
}

std::optional<json> parse_candidate(std::string_view cand) {
    json j = json::parse(cand, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
    if (auto converted = python_to_json(cand)) {
        j = json::parse(*converted, nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    return std::nullopt;
}

/// `{ "Answer" : <anything> }` where the value is not valid JSON.
std::optional<std::string> lenient_answer(std::string_view cand) {
    std::string_view body = util::trim(cand.substr(1, cand.size() - 2));
    for (std::string_view key : {"\"Answer\"", "'Answer'", "Answer"}) {
        if (body.substr(0, key.size()) != key) continue;
        std::string_view rest = util::trim(body.substr(key.size()));
        if (rest.empty() || rest[0] != ':') return std::nullopt;
        std::string_view value = util::trim(rest.substr(1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
            value = value.substr(1, value.size() - 2);
        if (util::trim(value).empty()) return std::nullopt;
        return std::string(value);
    }
    return std::nullopt;
}

} // namespace

std::optional<json> find_object(std::string_view reply, const std::function<bool(const json&)>& accept) {
    std::optional<json> found;
    for_each_candidate(reply, [&](std::string_view cand) {
        auto j = parse_candidate(cand);
        if (j && accept(*j)) {
            found = std::move(j);
            return true;
        }
        return false;
    });
    return found;
}

std::optional<CriticalInfo> parse_critical(std::string_view reply) {
    auto obj = find_object(reply, [](const json& j) {
        bool has_text = j.contains("text"), has_image = j.contains("image");
        if (!has_text && !has_image) return false;
        if (has_text && !j["text"].is_string()) return false;
        if (has_image && !j["image"].is_string()) return false;
        return true;
    });
    if (!obj) return std::nullopt;
    return CriticalInfo{obj->value("text", std::string()), obj->value("image", std::string())};
}

std::optional<std::string> parse_answer(std::string_view reply) {
    std::optional<std::string> out;
    for_each_candidate(reply, [&](std::string_view cand) {
        if (auto j = parse_candidate(cand); j && j->contains("Answer")) {
            const json& v = (*j)["Answer"];
            out = v.is_string() ? v.get<std::string>() : v.dump();
            return true;
        }
        if (auto v = lenient_answer(cand)) {
            out = std::move(v);
            return true;
        }
        return false;
    });
    return out;
}

std::optional<int> parse_correctness(std::string_view reply) {
    auto value_of = [](const json& v) -> std::optional<int> {
        if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
        if (v.is_number()) {
            double d = v.get<double>();
            if (d == 0 || d == 1) return static_cast<int>(d);
            return std::nullopt;
        }
        if (v.is_string()) {
            std::string_view s = util::trim(v.get_ref<const std::string&>());
            if (s == "0") return 0;
            if (s == "1") return 1;
        }
        return std::nullopt;
    };
    auto obj = find_object(reply, [&](const json& j) { return j.contains("correctness") && value_of(j["correctness"]); });
    if (!obj) return std::nullopt;
    return value_of((*obj)["correctness"]);
}

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig PipelineConfig::with_defaults(const gateway::ModelEndpoint& endpoint) {
    PipelineConfig cfg;
    for (AgentRole r : kAllRoles) {
        AgentConfig& a = cfg.agent(r);
        a.role = r;
        a.endpoint = endpoint;
        a.system_prompt = std::string(default_prompt(r));
    }
    return cfg;
}

void PipelineConfig::validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
        return Error(ErrorCode::ConfigInvalid, field + ": " + why);
    };
    if (k < 1) throw bad("retrieval.k", "must be at least 1");
    if (!enable_text_agent && !enable_image_agent)
        throw bad("ablation", "at least one of text_agent and image_agent must be enabled");
    for (AgentRole r : kAllRoles) {
        const AgentConfig& a = agent(r);
        std::string base = "agents." + std::string(to_string(r));
        if (a.role != r) throw bad(base + ".role", "does not match its slot");
        if (util::trim(a.system_prompt).empty()) throw bad(base + ".prompt", "must not be empty");
        if (a.params.max_new_tokens < 1) throw bad(base + ".max_new_tokens", "must be at least 1");
        if (a.endpoint.base_url.empty()) throw bad(base + ".endpoint", "has no base_url");
        if (a.endpoint.timeout_s <= 0) throw bad(base + ".endpoint", "timeout must be positive");
    }
}

// ---------------------------------------------------------------------------
// Transcript

void CallLog::append(std::string role, const gateway::CallMeta& meta, bool format_retry) {
    entries_.push_back({static_cast<int>(entries_.size()) + 1, std::move(role), meta.endpoint, meta.latency_ms,
                        meta.retry_count, format_retry});
}

json to_json(const QATranscript& t) {
    json j;
    j["question"] = t.question;
    if (!t.item_id.empty()) j["item_id"] = t.item_id;
    if (!t.doc_id.empty()) j["doc_id"] = t.doc_id;
    j["k"] = t.k;
    j["flags"] = {{"text_agent", t.text_agent}, {"image_agent", t.image_agent}, {"general_critical", t.general_critical}};
    json text_hits = json::array(), image_hits = json::array();
    for (const auto& h : t.retrieval.text_hits)
        text_hits.push_back({{"doc_id", h.segment.doc_id},
                             {"page_index", h.segment.page_index},
                             {"segment_index", h.segment.segment_index},
                             {"content", h.segment.content},
                             {"score", h.score}});
    for (const auto& h : t.retrieval.image_hits)
        image_hits.push_back({{"doc_id", h.image.doc_id},
                              {"page_index", h.image.page_index},
                              {"file_ref", h.image.file_ref.string()},
                              {"width", h.image.width},
                              {"height", h.image.height},
                              {"render_dpi", h.image.render_dpi},
                              {"score", h.score}});
    j["retrieval"] = {{"k", t.retrieval.k},
                      {"text_hits", std::move(text_hits)},
                      {"image_hits", std::move(image_hits)},
                      {"text_index_empty", t.retrieval.text_index_empty},
                      {"image_index_empty", t.retrieval.image_index_empty}};
    j["answers"] = t.answers;
    j["critical"] = t.critical ? json{{"text", t.critical->text_hint}, {"image", t.critical->image_hint}} : json();
    j["critical_fallback"] = t.critical_fallback;
    j["summary_fallback"] = t.summary_fallback;
    j["final"] = t.final_answer ? json(*t.final_answer) : json();
    if (t.failure) j["failure"] = {{"stage", t.failure->stage}, {"code", t.failure->code}, {"message", t.failure->message}};
    json log = json::array();
    for (const auto& e : t.call_log)
        log.push_back({{"seq", e.seq},
                       {"role", e.role},
                       {"endpoint", e.endpoint},
                       {"latency_ms", e.latency_ms},
                       {"retry_count", e.retry_count},
                       {"format_retry", e.format_retry}});
    j["call_log"] = std::move(log);
    j["prompt_hashes"] = t.prompt_hashes;
    return j;
}

QATranscript transcript_from_json(const json& j) {
    QATranscript t;
    t.question = j.at("question").get<std::string>();
    t.item_id = j.value("item_id", std::string());
    t.doc_id = j.value("doc_id", std::string());
    t.k = j.value("k", size_t{0});
    if (j.contains("flags")) {
        t.text_agent = j["flags"].value("text_agent", true);
        t.image_agent = j["flags"].value("image_agent", true);
        t.general_critical = j["flags"].value("general_critical", true);
    }
    if (j.contains("retrieval")) {
        const json& r = j["retrieval"];
        t.retrieval.k = r.value("k", size_t{0});
        t.retrieval.text_index_empty = r.value("text_index_empty", false);
        t.retrieval.image_index_empty = r.value("image_index_empty", false);
        for (const json& h : r.value("text_hits", json::array()))
            t.retrieval.text_hits.push_back({{h.at("doc_id").get<std::string>(), h.at("page_index").get<int>(),
                                              h.at("segment_index").get<int>(), h.at("content").get<std::string>()},
                                             h.at("score").get<double>()});
        for (const json& h : r.value("image_hits", json::array())) {
            ingest::PageImage img;
            img.doc_id = h.at("doc_id").get<std::string>();
            img.page_index = h.at("page_index").get<int>();
            img.file_ref = h.at("file_ref").get<std::string>();
            img.width = h.value("width", 0);
            img.height = h.value("height", 0);
            img.render_dpi = h.value("render_dpi", ingest::kDefaultRenderDpi);
            t.retrieval.image_hits.push_back({std::move(img), h.at("score").get<double>()});
        }
    }
    if (j.contains("answers")) t.answers = j["answers"].get<std::map<std::string, std::string>>();
    if (j.contains("critical") && j["critical"].is_object())
        t.critical = CriticalInfo{j["critical"].value("text", std::string()), j["critical"].value("image", std::string())};
    t.critical_fallback = j.value("critical_fallback", false);
    t.summary_fallback = j.value("summary_fallback", false);
    if (j.contains("final") && j["final"].is_string()) t.final_answer = j["final"].get<std::string>();
    if (j.contains("failure") && j["failure"].is_object())
        t.failure = Failure{j["failure"].value("stage", std::string()), j["failure"].value("code", std::string()),
                            j["failure"].value("message", std::string())};
    for (const json& e : j.value("call_log", json::array()))
        t.call_log.push_back({e.at("seq").get<int>(), e.at("role").get<std::string>(), e.value("endpoint", std::string()),
                              e.value("latency_ms", 0.0), e.value("retry_count", 0), e.value("format_retry", false)});
    if (j.contains("prompt_hashes")) t.prompt_hashes = j["prompt_hashes"].get<std::map<std::string, std::string>>();
    return t;
}

// ---------------------------------------------------------------------------
// Agents

namespace {

constexpr std::string_view kCriticalReminder =
    "Your previous reply could not be read. Reply with only the dictionary, for example "
    "{\"text\": \"...\", \"image\": \"...\"}.";
constexpr std::string_view kAnswerReminder =
    "Your previous reply could not be read. Reply with only {\"Answer\": \"...\"} holding your final answer.";

std::string text_context(const std::vector<retrieval::TextHit>& text) {
    std::string s = "Text context:\n";
    for (size_t i = 0; i < text.size(); ++i) {
        const auto& seg = text[i].segment;
        s += "[" + std::to_string(i + 1) + "] (" + seg.doc_id + ", page " + std::to_string(seg.page_index) + ", segment " +
             std::to_string(seg.segment_index) + ")\n" + seg.content + "\n\n";
    }
    return s;
}

std::string image_legend(const std::vector<retrieval::ImageHit>& images) {
    std::string s = "Page images (attached in this order):\n";
    for (size_t i = 0; i < images.size(); ++i)
        s += "[" + std::to_string(i + 1) + "] (" + images[i].image.doc_id + ", page " +
             std::to_string(images[i].image.page_index) + ")\n";
    return s + "\n";
}

std::vector<gateway::Part> image_parts(const std::vector<retrieval::ImageHit>& images) {
    std::vector<gateway::Part> parts;
    for (const auto& h : images) parts.emplace_back(gateway::ImagePart{util::read_file(h.image.file_ref), "image/png"});
    return parts;
}

std::string finish_block(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
    return s;
}

std::vector<gateway::ChatMessage> conversation(const AgentConfig& a, std::string block, std::vector<gateway::Part> images) {
    std::vector<gateway::Part> parts;
    parts.emplace_back(gateway::TextPart{finish_block(std::move(block))});
    for (auto& p : images) parts.push_back(std::move(p));
    return {gateway::ChatMessage::system(a.system_prompt), gateway::ChatMessage::user(std::move(parts))};
}

std::string call(AgentContext& ctx, AgentRole role, const std::vector<gateway::ChatMessage>& messages, bool format_retry) {
    const AgentConfig& a = ctx.config.agent(role);
    try {
        gateway::ChatResult r = ctx.backend.complete(a.endpoint, messages, a.params);
        ctx.log.append(std::string(to_string(role)), r.meta, format_retry);
        return r.text;
    } catch (const Error& e) {
        throw e.annotated(std::string(to_string(role)) + " agent");
    }
}

/// One call, then on a parse miss one reminder round over the same conversation.
template <typename Parse>
auto call_structured(AgentContext& ctx, AgentRole role, std::vector<gateway::ChatMessage> messages,
                     std::string_view reminder, Parse&& parse, std::string* last_raw) {
    std::string raw = call(ctx, role, messages, false);
    auto parsed = parse(raw);
    if (!parsed) {
        spdlog::debug("{} agent reply did not parse, retrying with a format reminder", to_string(role));
        messages.push_back(gateway::ChatMessage::assistant(raw));
        messages.push_back(gateway::ChatMessage::user({gateway::TextPart{std::string(reminder)}}));
        raw = call(ctx, role, messages, true);
        parsed = parse(raw);
    }
    *last_raw = std::move(raw);
    return parsed;
}

} // namespace

std::string run_general(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                        const std::vector<retrieval::ImageHit>& images) {
    std::string block = "Question: " + q + "\n\n";
    if (!text.empty()) block += text_context(text);
    if (!images.empty()) block += image_legend(images);
    const AgentConfig& a = ctx.config.agent(AgentRole::General);
    return call(ctx, AgentRole::General, conversation(a, block, image_parts(images)), false);
}

CriticalInfo run_critical(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                          const std::vector<retrieval::ImageHit>& images, const std::string& general_answer,
                          bool* fallback) {
    std::string block = "Question: " + q + "\n\n";
    if (!text.empty()) block += text_context(text);
    if (!images.empty()) block += image_legend(images);
    block += "Preliminary answer:\n" + general_answer;
    const AgentConfig& a = ctx.config.agent(AgentRole::Critical);
    std::string raw;
    auto parsed = call_structured(ctx, AgentRole::Critical, conversation(a, block, image_parts(images)), kCriticalReminder,
                                  [](const std::string& r) { return parse_critical(r); }, &raw);
    if (fallback) *fallback = !parsed;
    if (parsed) return *parsed;
    return CriticalInfo{raw, raw};
}

std::string run_text_agent(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                           const std::string& text_hint) {
    std::string block = "Question: " + q + "\n\n";
    if (!text.empty()) block += text_context(text);
    if (!util::trim(text_hint).empty()) block += "Critical information:\n" + text_hint;
    const AgentConfig& a = ctx.config.agent(AgentRole::Text);
    return call(ctx, AgentRole::Text, conversation(a, block, {}), false);
}

std::string run_image_agent(AgentContext& ctx, const std::string& q, const std::vector<retrieval::ImageHit>& images,
                            const std::string& image_hint) {
    std::string block = "Question: " + q + "\n\n";
    if (!images.empty()) block += image_legend(images);
    if (!util::trim(image_hint).empty()) block += "Critical information:\n" + image_hint;
    const AgentConfig& a = ctx.config.agent(AgentRole::Image);
    return call(ctx, AgentRole::Image, conversation(a, block, image_parts(images)), false);
}

std::string run_summarizer(AgentContext& ctx, const std::string& q, const std::optional<std::string>& general_answer,
                           const std::optional<std::string>& text_answer, const std::optional<std::string>& image_answer,
                           bool* fallback) {
    if (!general_answer && !text_answer && !image_answer)
        throw Error(ErrorCode::ConfigInvalid, "summarizer needs at least one agent answer");
    std::string block = "Question: " + q + "\n\nAnswers:\n";
    if (general_answer) block += "General agent:\n" + *general_answer + "\n\n";
    if (text_answer) block += "Text agent:\n" + *text_answer + "\n\n";
    if (image_answer) block += "Image agent:\n" + *image_answer + "\n\n";
    const AgentConfig& a = ctx.config.agent(AgentRole::Summarizing);
    std::string raw;
    auto parsed = call_structured(ctx, AgentRole::Summarizing, conversation(a, block, {}), kAnswerReminder,
                                  [](const std::string& r) { return parse_answer(r); }, &raw);
    if (fallback) *fallback = !parsed;
    return parsed ? *parsed : raw;
}

namespace {

QATranscript empty_transcript(const PipelineConfig& config, const std::string& question) {
    QATranscript t;
    t.question = question;
    t.k = config.k;
    t.text_agent = config.enable_text_agent;
    t.image_agent = config.enable_image_agent;
    t.general_critical = config.enable_general_critical;
    for (AgentRole r : kAllRoles) t.prompt_hashes[std::string(to_string(r))] = util::sha256_hex(config.agent(r).system_prompt);
    return t;
}

Failure failure_of(const Error& e, std::string stage) {
    return Failure{std::move(stage), std::string(to_string(e.code())), e.what()};
}

} // namespace

QATranscript run_agents(const PipelineConfig& config, gateway::ChatBackend& backend, const std::string& question,
                        retrieval::RetrievalResult retrieval) {
    config.validate();
    QATranscript t = empty_transcript(config, question);
    t.retrieval = std::move(retrieval);
    CallLog log;
    AgentContext ctx{config, backend, log};
    const auto& T_q = t.retrieval.text_hits;
    const auto& I_q = t.retrieval.image_hits;
    std::string stage;
    try {
        std::optional<std::string> a_g, a_t, a_i;
        CriticalInfo hints;
        if (config.enable_general_critical) {
            stage = "general";
            a_g = run_general(ctx, question, T_q, I_q);
            t.answers["general"] = *a_g;
            stage = "critical";
            hints = run_critical(ctx, question, T_q, I_q, *a_g, &t.critical_fallback);
            t.critical = hints;
        }
        if (config.enable_text_agent) {
            stage = "text";
            a_t = run_text_agent(ctx, question, T_q, hints.text_hint);
            t.answers["text"] = *a_t;
        }
        if (config.enable_image_agent) {
            stage = "image";
            a_i = run_image_agent(ctx, question, I_q, hints.image_hint);
            t.answers["image"] = *a_i;
        }
        stage = "summarizing";
        t.final_answer = run_summarizer(ctx, question, a_g, a_t, a_i, &t.summary_fallback);
    } catch (const Error& e) {
        spdlog::warn("question aborted in {} stage: {}", stage, e.what());
        t.failure = failure_of(e, stage);
    } catch (const std::exception& e) {
        spdlog::warn("question aborted in {} stage: {}", stage, e.what());
        t.failure = Failure{stage, "Internal", e.what()};
    }
    t.call_log = log.entries();
    return t;
}

QATranscript answer_question(const std::string& question, const retrieval::Retriever& retriever,
                             const PipelineConfig& config, gateway::ChatBackend& backend, std::string_view doc_id) {
    config.validate();
    retrieval::RetrievalResult r;
    try {
        r = retriever.retrieve(question, config.k, doc_id);
    } catch (const Error& e) {
        if (e.category() == ErrorCategory::Config) throw;
        spdlog::warn("retrieval failed: {}", e.what());
        QATranscript t = empty_transcript(config, question);
        t.doc_id = std::string(doc_id);
        t.failure = failure_of(e, "retrieval");
        return t;
    }
    QATranscript t = run_agents(config, backend, question, std::move(r));
    t.doc_id = std::string(doc_id);
    return t;
}

} // namespace polydoc::agents
