#include "polydoc/config.hpp"

#include <set>

#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace polydoc::config {

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& why) {
    throw Error(ErrorCode::ConfigInvalid, path + ": " + why);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Typed, path-aware view of one JSON object; every key must be consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) invalid(path_.empty() ? "<root>" : path_, "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    std::string path(const std::string& key) const { return join(path_, key); }

    const json* raw(const std::string& key) {
        seen_.insert(key);
        if (!has(key)) return nullptr;
        return &j_.at(key);
    }

    std::optional<std::string> str(const std::string& key) {
        const json* v = raw(key);
        if (!v) return std::nullopt;
        if (!v->is_string()) invalid(path(key), "must be a string");
        return v->get<std::string>();
    }

    std::optional<bool> boolean(const std::string& key) {
        const json* v = raw(key);
        if (!v) return std::nullopt;
        if (!v->is_boolean()) invalid(path(key), "must be true or false");
        return v->get<bool>();
    }

    std::optional<int64_t> integer(const std::string& key, int64_t lo, int64_t hi) {
        const json* v = raw(key);
        if (!v) return std::nullopt;
        if (!v->is_number_integer()) invalid(path(key), "must be an integer");
        auto n = v->get<int64_t>();
        if (n < lo) invalid(path(key), "must be at least " + std::to_string(lo));
        if (n > hi) invalid(path(key), "must be at most " + std::to_string(hi));
        return n;
    }

    std::optional<double> number(const std::string& key, double lo_exclusive) {
        const json* v = raw(key);
        if (!v) return std::nullopt;
        if (!v->is_number()) invalid(path(key), "must be a number");
        double d = v->get<double>();
        if (!(d > lo_exclusive)) invalid(path(key), "must be greater than " + json(lo_exclusive).dump());
        return d;
    }

    std::optional<Fields> object(const std::string& key) {
        const json* v = raw(key);
        if (!v) return std::nullopt;
        return Fields(*v, path(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) invalid(path(k), "unknown key");
    }

    const json& value() const { return j_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

gateway::ModelEndpoint parse_endpoint(Fields f) {
    gateway::ModelEndpoint e;
    auto url = f.str("base_url");
    if (!url) invalid(f.path("base_url"), "is required");
    if (url->rfind("http://", 0) != 0 && url->rfind("https://", 0) != 0) invalid(f.path("base_url"), "must start with http:// or https://");
    if (url->find("://") + 3 >= url->size()) invalid(f.path("base_url"), "has no host");
    e.base_url = *url;
    while (!e.base_url.empty() && e.base_url.back() == '/') e.base_url.pop_back();
    e.model_name = f.str("model").value_or("");
    e.api_key_env = f.str("api_key_env").value_or("");
    if (auto t = f.number("timeout_s", 0)) e.timeout_s = *t;
    if (auto r = f.integer("max_retries", 0, 20)) e.max_retries = static_cast<int>(*r);
    if (auto c = f.integer("max_concurrency", 1, 1024)) e.max_concurrency = static_cast<size_t>(*c);
    if (auto b = f.number("backoff_initial_s", 0)) e.backoff_initial_s = *b;
    if (auto b = f.number("backoff_max_s", 0)) e.backoff_max_s = *b;
    if (const json* x = f.raw("extra_body")) {
        if (!x->is_object()) invalid(f.path("extra_body"), "must be an object");
        e.extra_body = *x;
    }
    if (auto p = f.integer("max_image_pixels", 1, INT64_MAX)) e.max_image_pixels = *p;
    f.finish();
    return e;
}

AgentBlock parse_agent_block(Fields f, std::string_view default_text, const fs::path& base) {
    AgentBlock b;
    b.prompt = std::string(default_text);
    b.endpoint = f.str("endpoint").value_or("");
    auto inline_prompt = f.str("prompt");
    auto prompt_file = f.str("prompt_file");
    if (inline_prompt && prompt_file) invalid(f.path("prompt"), "set either prompt or prompt_file, not both");
    if (inline_prompt) {
        b.prompt = *inline_prompt;
        b.prompt_source = "inline";
    }
    if (prompt_file) {
        fs::path p = resolve(base, *prompt_file);
        if (!fs::exists(p)) invalid(f.path("prompt_file"), "file not found: " + p.string());
        std::string text = util::read_file(p);
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        b.prompt = std::move(text);
        b.prompt_source = p.string();
    }
    if (util::trim(b.prompt).empty()) invalid(f.path("prompt"), "must not be empty");
    if (auto n = f.integer("max_new_tokens", 1, 1 << 20)) b.params.max_new_tokens = static_cast<int>(*n);
    if (const json* t = f.raw("temperature")) {
        if (!t->is_number() || t->get<double>() < 0) invalid(f.path("temperature"), "must be a non-negative number or null");
        b.params.temperature = t->get<double>();
    }
    f.finish();
    return b;
}

} // namespace

const gateway::ModelEndpoint& RunConfig::endpoint(const std::string& name, const std::string& field) const {
    if (name.empty()) invalid(field, "no endpoint configured");
    auto it = endpoints.find(name);
    if (it == endpoints.end()) invalid(field, "unknown endpoint '" + name + "'");
    return it->second;
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
    RunConfig cfg;
    Fields root(doc, "");
    if (auto s = root.str("corpus_dir")) cfg.corpus_dir = resolve(base_dir, *s);
    if (auto s = root.str("index_dir")) cfg.index_dir = resolve(base_dir, *s);
    if (auto s = root.str("output_dir")) cfg.output_dir = resolve(base_dir, *s);
    else cfg.output_dir = resolve(base_dir, "runs");
    if (cfg.index_dir.empty() && !cfg.corpus_dir.empty()) cfg.index_dir = cfg.corpus_dir / "index";

    if (auto r = root.object("retrieval")) {
        if (auto k = r->integer("k", 1, 1000)) cfg.k = static_cast<size_t>(*k);
        r->finish();
    }
    if (auto a = root.object("ablation")) {
        if (auto b = a->boolean("text_agent")) cfg.text_agent = *b;
        if (auto b = a->boolean("image_agent")) cfg.image_agent = *b;
        if (auto b = a->boolean("general_critical")) cfg.general_critical = *b;
        a->finish();
        if (!cfg.text_agent && !cfg.image_agent) invalid("ablation", "at least one of text_agent and image_agent must be true");
    }
    if (auto e = root.object("endpoints")) {
        for (const auto& [name, v] : e->value().items()) {
            if (v.is_null()) continue;
            cfg.endpoints[name] = parse_endpoint(*e->object(name));
        }
        e->finish();
    }
    cfg.default_endpoint = root.str("default_endpoint").value_or("");

    std::optional<Fields> agents_obj = root.object("agents");
    for (agents::AgentRole r : agents::kAllRoles) {
        std::string name(agents::to_string(r));
        std::optional<Fields> block = agents_obj ? agents_obj->object(name) : std::nullopt;
        if (block) cfg.agent(r) = parse_agent_block(*block, agents::default_prompt(r), base_dir);
        else cfg.agent(r).prompt = std::string(agents::default_prompt(r));
    }
    if (agents_obj) agents_obj->finish();

    if (auto j = root.object("judge")) cfg.judge = parse_agent_block(*j, agents::default_evaluation_prompt(), base_dir);
    else cfg.judge.prompt = std::string(agents::default_evaluation_prompt());

    if (auto s = root.object("sidecar")) {
        cfg.text_embedder = s->str("text").value_or("");
        cfg.image_embedder = s->str("image").value_or(cfg.text_embedder);
        cfg.ocr = s->str("ocr").value_or("");
        if (auto n = s->integer("batch_size", 1, 4096)) cfg.index_batch_size = static_cast<size_t>(*n);
        if (auto n = s->integer("max_in_flight", 1, 256)) cfg.index_max_in_flight = static_cast<size_t>(*n);
        s->finish();
    }
    if (auto n = root.integer("concurrency", 1, 1024)) cfg.concurrency = static_cast<size_t>(*n);
    if (auto img = root.object("image")) {
        if (auto d = img->integer("dpi", 1, 1200)) cfg.dpi = static_cast<int>(*d);
        img->finish();
    }
    if (auto s = root.integer("seed", 0, INT64_MAX)) cfg.seed = static_cast<uint64_t>(*s);
    root.finish();

    // Every endpoint reference must resolve, even for commands that do not use it.
    if (!cfg.default_endpoint.empty()) cfg.endpoint(cfg.default_endpoint, "default_endpoint");
    for (agents::AgentRole r : agents::kAllRoles)
        if (!cfg.agent(r).endpoint.empty()) cfg.endpoint(cfg.agent(r).endpoint, "agents." + std::string(agents::to_string(r)) + ".endpoint");
    if (!cfg.judge.endpoint.empty()) cfg.endpoint(cfg.judge.endpoint, "judge.endpoint");
    if (!cfg.text_embedder.empty()) cfg.endpoint(cfg.text_embedder, "sidecar.text");
    if (!cfg.image_embedder.empty()) cfg.endpoint(cfg.image_embedder, "sidecar.image");
    if (!cfg.ocr.empty()) cfg.endpoint(cfg.ocr, "sidecar.ocr");
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path)) invalid(path.string(), "config file not found");
    json doc = json::parse(util::read_file(path), nullptr, false);
    if (doc.is_discarded()) invalid(path.string(), "not valid JSON");
    return parse_run_config(doc, path.parent_path());
}

json default_config_document() {
    return {
        {"corpus_dir", "corpus"},
        {"index_dir", "corpus/index"},
        {"output_dir", "runs"},
        {"retrieval", {{"k", kDefaultTopK}}},
        {"ablation", {{"text_agent", true}, {"image_agent", true}, {"general_critical", true}}},
        {"default_endpoint", "lvlm"},
        {"endpoints",
         {{"lvlm", {{"base_url", "http://localhost:8000/v1"}, {"model", "Qwen/Qwen2-VL-7B-Instruct"}, {"timeout_s", 120}, {"max_retries", 2}}},
          {"llm", {{"base_url", "http://localhost:8001/v1"}, {"model", "meta-llama/Llama-3.1-8B-Instruct"}, {"timeout_s", 120}, {"max_retries", 2}}},
          {"judge", {{"base_url", "https://api.openai.com/v1"}, {"model", "gpt-4o"}, {"api_key_env", "OPENAI_API_KEY"}, {"timeout_s", 60}}},
          {"sidecar", {{"base_url", "http://localhost:8100/v1"}, {"timeout_s", 120}}}}},
        {"agents",
         {{"general", {{"max_new_tokens", kDefaultMaxNewTokens}}},
          {"critical", {{"max_new_tokens", kDefaultMaxNewTokens}}},
          {"text", {{"endpoint", "llm"}, {"max_new_tokens", kDefaultMaxNewTokens}}},
          {"image", {{"max_new_tokens", kDefaultMaxNewTokens}}},
          {"summarizing", {{"max_new_tokens", kDefaultMaxNewTokens}}}}},
        {"judge", {{"endpoint", "judge"}, {"max_new_tokens", kDefaultMaxNewTokens}}},
        {"sidecar", {{"text", "sidecar"}, {"image", "sidecar"}, {"ocr", "sidecar"}}},
        {"concurrency", 4},
        {"image", {{"dpi", kDefaultDpi}}},
        {"seed", 0},
    };
}

agents::PipelineConfig pipeline_config(const RunConfig& cfg) {
    agents::PipelineConfig p;
    p.k = cfg.k;
    p.enable_text_agent = cfg.text_agent;
    p.enable_image_agent = cfg.image_agent;
    p.enable_general_critical = cfg.general_critical;
    for (agents::AgentRole r : agents::kAllRoles) {
        const AgentBlock& b = cfg.agent(r);
        std::string field = "agents." + std::string(agents::to_string(r)) + ".endpoint";
        agents::AgentConfig& a = p.agent(r);
        a.role = r;
        a.endpoint = cfg.endpoint(b.endpoint.empty() ? cfg.default_endpoint : b.endpoint, field);
        a.system_prompt = b.prompt;
        a.params = b.params;
    }
    p.validate();
    return p;
}

eval::JudgeConfig judge_config(const RunConfig& cfg) {
    eval::JudgeConfig j;
    j.endpoint = cfg.endpoint(cfg.judge.endpoint.empty() ? cfg.default_endpoint : cfg.judge.endpoint, "judge.endpoint");
    j.prompt_template = cfg.judge.prompt;
    j.params = cfg.judge.params;
    return j;
}

const gateway::ModelEndpoint& text_embedder_endpoint(const RunConfig& cfg) { return cfg.endpoint(cfg.text_embedder, "sidecar.text"); }

const gateway::ModelEndpoint& image_embedder_endpoint(const RunConfig& cfg) {
    return cfg.endpoint(cfg.image_embedder, "sidecar.image");
}

json snapshot(const RunConfig& cfg) {
    json agents_j = json::object();
    for (agents::AgentRole r : agents::kAllRoles) {
        const AgentBlock& b = cfg.agent(r);
        std::string ep = b.endpoint.empty() ? cfg.default_endpoint : b.endpoint;
        auto it = cfg.endpoints.find(ep);
        agents_j[std::string(agents::to_string(r))] = {
            {"endpoint", it == cfg.endpoints.end() ? ep : it->second.label()},
            {"prompt_sha256", util::sha256_hex(b.prompt)},
            {"max_new_tokens", b.params.max_new_tokens},
            {"temperature", b.params.temperature ? json(*b.params.temperature) : json()}};
    }
    std::string judge_ep = cfg.judge.endpoint.empty() ? cfg.default_endpoint : cfg.judge.endpoint;
    auto jit = cfg.endpoints.find(judge_ep);
    return {{"k", cfg.k},
            {"flags", {{"text_agent", cfg.text_agent}, {"image_agent", cfg.image_agent}, {"general_critical", cfg.general_critical}}},
            {"agents", std::move(agents_j)},
            {"judge", {{"endpoint", jit == cfg.endpoints.end() ? judge_ep : jit->second.label()},
                       {"prompt_sha256", util::sha256_hex(cfg.judge.prompt)}}},
            {"dpi", cfg.dpi}};
}

} // namespace polydoc::config
