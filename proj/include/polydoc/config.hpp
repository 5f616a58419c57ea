#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "polydoc/agents.hpp"
#include "polydoc/eval.hpp"
#include "polydoc/gateway.hpp"
#include "polydoc/ingest.hpp"

namespace polydoc::config {

/// Top-k settings exercised by the reference hyperparameters; k defaults to
/// the larger one.
inline constexpr std::array<size_t, 2> kReferenceTopK = {1, 4};
inline constexpr size_t kDefaultTopK = 4;
inline constexpr int kDefaultDpi = ingest::kDefaultRenderDpi;
inline constexpr int kDefaultMaxNewTokens = gateway::kDefaultMaxNewTokens;

struct AgentBlock {
    std::string endpoint; // name in RunConfig::endpoints; empty = default_endpoint
    std::string prompt;   // resolved text
    std::string prompt_source = "default"; // "default", "inline" or the file path
    gateway::GenerationParams params;
};

struct RunConfig {
    std::filesystem::path corpus_dir;
    std::filesystem::path index_dir;
    std::filesystem::path output_dir = "runs";
    size_t k = kDefaultTopK;
    bool text_agent = true;
    bool image_agent = true;
    bool general_critical = true;
    std::string default_endpoint;
    std::map<std::string, gateway::ModelEndpoint> endpoints;
    std::array<AgentBlock, 5> agents; // indexed by AgentRole
    AgentBlock judge;
    std::string text_embedder;  // endpoint names for the sidecar
    std::string image_embedder;
    std::string ocr;
    size_t index_batch_size = 8;
    size_t index_max_in_flight = 4;
    size_t concurrency = 4;
    int dpi = kDefaultDpi;
    uint64_t seed = 0;

    const AgentBlock& agent(agents::AgentRole r) const { return agents[static_cast<size_t>(r)]; }
    AgentBlock& agent(agents::AgentRole r) { return agents[static_cast<size_t>(r)]; }

    /// Endpoint by name; throws ConfigInvalid naming `field` when absent.
    const gateway::ModelEndpoint& endpoint(const std::string& name, const std::string& field) const;
};

/// Parses and validates a config document. Unknown keys, wrong types and
/// out-of-range values raise ConfigInvalid naming the field path (e.g.
/// `retrieval.k`). Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// The documented defaults as a config document.
nlohmann::json default_config_document();

/// Each throws ConfigInvalid when the pieces a command needs are missing.
agents::PipelineConfig pipeline_config(const RunConfig& cfg);
eval::JudgeConfig judge_config(const RunConfig& cfg);
const gateway::ModelEndpoint& text_embedder_endpoint(const RunConfig& cfg);
const gateway::ModelEndpoint& image_embedder_endpoint(const RunConfig& cfg);

/// Reproducibility record for reports: k, flags, endpoint labels, prompt hashes.
nlohmann::json snapshot(const RunConfig& cfg);

} // namespace polydoc::config
