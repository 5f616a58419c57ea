#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydoc/gateway.hpp"
#include "polydoc/retrieval.hpp"

namespace polydoc::agents {

enum class AgentRole { General, Critical, Text, Image, Summarizing };

inline constexpr std::array<AgentRole, 5> kAllRoles = {AgentRole::General, AgentRole::Critical, AgentRole::Text,
                                                       AgentRole::Image, AgentRole::Summarizing};

/// "general", "critical", "text", "image", "summarizing".
std::string_view to_string(AgentRole role);
std::optional<AgentRole> role_from_string(std::string_view name);

// ---------------------------------------------------------------------------
// Prompts

/// Built-in system prompt for a role (also shipped as prompts/<role>.txt).
std::string_view default_prompt(AgentRole role);

/// Built-in judge prompt with {question}, {answer} and {gt} slots.
std::string_view default_evaluation_prompt();

/// Fills the three judge slots in one pass, so slot-like text inside the
/// values is never substituted again.
std::string fill_evaluation_prompt(std::string_view tmpl, std::string_view question, std::string_view answer,
                                   std::string_view ground_truth);

// ---------------------------------------------------------------------------
// Reply parsing

/// Finds the first balanced {...} substring (string-aware, either quote
/// style) whose parse as a JSON object, or failing that as a Python-style
/// dict literal, satisfies `accept`.
std::optional<nlohmann::json> find_object(std::string_view reply,
                                          const std::function<bool(const nlohmann::json&)>& accept);

struct CriticalInfo {
    std::string text_hint;
    std::string image_hint;

    bool operator==(const CriticalInfo&) const = default;
};

/// First object carrying a string "text" and/or "image"; a missing key yields
/// an empty hint. nullopt is a parse miss.
std::optional<CriticalInfo> parse_critical(std::string_view reply);

/// Value of the first {"Answer": ...} object. Non-string values are
/// serialized; an unquoted value (`{"Answer": 42 apples}`) is taken verbatim.
std::optional<std::string> parse_answer(std::string_view reply);

/// First {"correctness": v} with v one of 0, 1, true, false, "0", "1".
std::optional<int> parse_correctness(std::string_view reply);

// ---------------------------------------------------------------------------
// Configuration

struct AgentConfig {
    AgentRole role = AgentRole::General;
    gateway::ModelEndpoint endpoint;
    std::string system_prompt;
    gateway::GenerationParams params;
};

struct PipelineConfig {
    size_t k = 4;
    bool enable_text_agent = true;
    bool enable_image_agent = true;
    bool enable_general_critical = true;
    std::array<AgentConfig, 5> agents; // indexed by AgentRole

    const AgentConfig& agent(AgentRole r) const { return agents[static_cast<size_t>(r)]; }
    AgentConfig& agent(AgentRole r) { return agents[static_cast<size_t>(r)]; }

    /// Default prompts and params for every role, all on `endpoint`.
    static PipelineConfig with_defaults(const gateway::ModelEndpoint& endpoint);

    /// Throws ConfigInvalid naming the offending field.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Transcript

struct CallLogEntry {
    int seq = 0;
    std::string role; // agent role name, or "judge"
    std::string endpoint;
    double latency_ms = 0;
    int retry_count = 0;
    bool format_retry = false;
};

class CallLog {
public:
    void append(std::string role, const gateway::CallMeta& meta, bool format_retry);
    const std::vector<CallLogEntry>& entries() const { return entries_; }

private:
    std::vector<CallLogEntry> entries_;
};

struct Failure {
    std::string stage; // role name or "retrieval"
    std::string code;
    std::string message;
};

struct QATranscript {
    std::string question;
    std::string item_id; // set by the benchmark harness
    std::string doc_id;  // retrieval scope; empty = whole corpus
    size_t k = 0;
    bool text_agent = true;
    bool image_agent = true;
    bool general_critical = true;
    retrieval::RetrievalResult retrieval;
    std::map<std::string, std::string> answers; // "general", "text", "image"
    std::optional<CriticalInfo> critical;
    bool critical_fallback = false;
    bool summary_fallback = false;
    std::optional<std::string> final_answer;
    std::optional<Failure> failure;
    std::vector<CallLogEntry> call_log;
    std::map<std::string, std::string> prompt_hashes; // role -> sha256 of system prompt

    bool completed() const { return final_answer.has_value(); }
};

nlohmann::json to_json(const QATranscript& t);
QATranscript transcript_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Agents

/// Shared state for one question's sequential agent calls.
struct AgentContext {
    const PipelineConfig& config;
    gateway::ChatBackend& backend;
    CallLog& log;
};

std::string run_general(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                        const std::vector<retrieval::ImageHit>& images);

/// Parse misses get one retry with a format reminder, then fall back to the
/// raw reply for both hints with `*fallback` set.
CriticalInfo run_critical(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                          const std::vector<retrieval::ImageHit>& images, const std::string& general_answer,
                          bool* fallback);

std::string run_text_agent(AgentContext& ctx, const std::string& q, const std::vector<retrieval::TextHit>& text,
                           const std::string& text_hint);

std::string run_image_agent(AgentContext& ctx, const std::string& q, const std::vector<retrieval::ImageHit>& images,
                            const std::string& image_hint);

/// Same retry and fallback policy as run_critical.
std::string run_summarizer(AgentContext& ctx, const std::string& q, const std::optional<std::string>& general_answer,
                           const std::optional<std::string>& text_answer, const std::optional<std::string>& image_answer,
                           bool* fallback);

/// Runs the enabled agents in the fixed order over a finished retrieval.
/// Gateway errors abort the question and are recorded in `failure`.
QATranscript run_agents(const PipelineConfig& config, gateway::ChatBackend& backend, const std::string& question,
                        retrieval::RetrievalResult retrieval);

/// Retrieval followed by run_agents. Retrieval errors are recorded the same way.
QATranscript answer_question(const std::string& question, const retrieval::Retriever& retriever,
                             const PipelineConfig& config, gateway::ChatBackend& backend, std::string_view doc_id = {});

} // namespace polydoc::agents
