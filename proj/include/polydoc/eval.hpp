#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydoc/agents.hpp"
#include "polydoc/gateway.hpp"

namespace polydoc::eval {

struct BenchmarkItem {
    std::string item_id;
    std::string question;
    std::string doc_id;
    std::string ground_truth;
    std::vector<std::string> categories;
};

/// One JSON object per line with the BenchmarkItem fields ("categories"
/// optional). Throws DatasetInvalid with the line number.
std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path);

struct JudgeConfig {
    gateway::ModelEndpoint endpoint;
    std::string prompt_template = std::string(agents::default_evaluation_prompt());
    gateway::GenerationParams params;
};

struct JudgeVerdict {
    int correctness = 0;
    std::string raw_reply;
};

/// Sends the filled evaluation prompt, with one format-reminder retry on a
/// parse miss. Throws JudgeParseFailure once both replies miss.
JudgeVerdict judge(const std::string& question, const std::string& predicted, const std::string& ground_truth,
                   const JudgeConfig& config, gateway::ChatBackend& backend, agents::CallLog* log = nullptr);

enum class ItemStatus { Judged, Failed, Unevaluated };

std::string_view to_string(ItemStatus s);

struct ItemResult {
    std::string item_id;
    std::vector<std::string> categories;
    std::string prediction;
    ItemStatus status = ItemStatus::Judged;
    std::optional<JudgeVerdict> verdict; // Judged only
    std::string error;                   // Failed / Unevaluated
    size_t agent_calls = 0;
};

struct CategoryStat {
    size_t correct = 0;
    size_t scored = 0;      // judged + failed items bearing the tag
    size_t unevaluated = 0;
    double accuracy = 0;
};

/// Accuracy counts judged verdicts plus failed items as 0 and leaves
/// unevaluated items out of the denominator.
struct BenchmarkReport {
    std::string run_id;
    std::vector<ItemResult> items; // dataset order
    size_t judged = 0;
    size_t failed = 0;
    size_t unevaluated = 0;
    size_t correct = 0;
    double accuracy = 0;
    std::map<std::string, CategoryStat> categories;
    nlohmann::json config; // snapshot: k, flags, endpoints, prompt hashes

    bool any_failed() const { return failed > 0; }
};

/// Recomputes every count and accuracy from `items`.
void finalize(BenchmarkReport& report);

/// Per-tag accuracy; an item counts towards each of its tags.
std::map<std::string, CategoryStat> aggregate_by_category(const std::vector<ItemResult>& items);

nlohmann::json to_json(const BenchmarkReport& report);
BenchmarkReport report_from_json(const nlohmann::json& j);
std::string format_table(const BenchmarkReport& report);

using AnswerFn = std::function<agents::QATranscript(const BenchmarkItem&)>;

struct BenchmarkOptions {
    std::string run_id = "run";
    /// JSONL journal of transcripts and verdicts. Items already present are
    /// not re-run, and items already judged are not re-judged.
    std::filesystem::path journal;
    size_t concurrency = 4;
    nlohmann::json config_snapshot = nlohmann::json::object();
};

BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& items, const AnswerFn& answer, const JudgeConfig& judge_config,
                              gateway::ChatBackend& judge_backend, const BenchmarkOptions& options);

struct RunComparison {
    std::vector<std::string> run_ids;
    std::vector<std::string> item_ids;  // intersection, sorted
    std::vector<double> accuracies;     // over the intersection
    std::vector<std::vector<double>> deltas; // deltas[i][j] = acc[j] - acc[i]
    std::vector<std::string> config_differences; // top-level snapshot keys that differ
    std::vector<std::string> warnings;  // e.g. ItemSetMismatch
};

/// Needs at least two reports. Mismatched item sets produce a warning and the
/// comparison runs over the shared items only.
RunComparison compare_runs(const std::vector<BenchmarkReport>& reports);

nlohmann::json to_json(const RunComparison& c);
std::string format_table(const RunComparison& c);

} // namespace polydoc::eval
