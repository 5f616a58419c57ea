#include "polydoc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace polydoc::eval {

std::vector<BenchmarkItem> load_dataset(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::DatasetInvalid, "dataset not found: " + path.string());
    std::istringstream in(util::read_file(path));
    std::vector<BenchmarkItem> items;
    std::set<std::string> ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (util::trim(line).empty()) continue;
        auto bad = [&](const std::string& why) {
            return Error(ErrorCode::DatasetInvalid, path.string() + ":" + std::to_string(lineno) + ": " + why);
        };
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw bad("not a JSON object");
        BenchmarkItem item;
        for (auto [field, dest] : {std::pair{"item_id", &item.item_id}, std::pair{"question", &item.question},
                                   std::pair{"doc_id", &item.doc_id}, std::pair{"ground_truth", &item.ground_truth}}) {
            if (!j.contains(field) || !j[field].is_string()) throw bad(std::string("missing string field '") + field + "'");
            *dest = j[field].get<std::string>();
        }
        if (util::trim(item.ground_truth).empty()) throw bad("ground_truth is empty");
        if (j.contains("categories")) {
            if (!j["categories"].is_array()) throw bad("categories must be a list of strings");
            for (const json& c : j["categories"]) {
                if (!c.is_string()) throw bad("categories must be a list of strings");
                item.categories.push_back(c.get<std::string>());
            }
        }
        if (!ids.insert(item.item_id).second) throw bad("duplicate item_id '" + item.item_id + "'");
        items.push_back(std::move(item));
    }
    return items;
}

namespace {
constexpr std::string_view kJudgeReminder =
    "Your previous reply could not be read. Return only {\"correctness\": 1} or {\"correctness\": 0}.";
}

JudgeVerdict judge(const std::string& question, const std::string& predicted, const std::string& ground_truth,
                   const JudgeConfig& config, gateway::ChatBackend& backend, agents::CallLog* log) {
    std::string prompt = agents::fill_evaluation_prompt(config.prompt_template, question, predicted, ground_truth);
    std::vector<gateway::ChatMessage> messages = {gateway::ChatMessage::user({gateway::TextPart{prompt}})};
    auto ask = [&](bool format_retry) {
        gateway::ChatResult r = backend.complete(config.endpoint, messages, config.params);
        if (log) log->append("judge", r.meta, format_retry);
        return r.text;
    };
    std::string raw = ask(false);
    if (auto c = agents::parse_correctness(raw)) return {*c, raw};
    messages.push_back(gateway::ChatMessage::assistant(raw));
    messages.push_back(gateway::ChatMessage::user({gateway::TextPart{std::string(kJudgeReminder)}}));
    raw = ask(true);
    if (auto c = agents::parse_correctness(raw)) return {*c, raw};
    throw Error(ErrorCode::JudgeParseFailure, "judge reply has no correctness verdict: " + raw.substr(0, 200));
}

std::string_view to_string(ItemStatus s) {
    switch (s) {
    case ItemStatus::Judged: return "judged";
    case ItemStatus::Failed: return "failed";
    case ItemStatus::Unevaluated: return "unevaluated";
    }
    return "judged";
}

namespace {

ItemStatus status_from_string(std::string_view s) {
    if (s == "failed") return ItemStatus::Failed;
    if (s == "unevaluated") return ItemStatus::Unevaluated;
    return ItemStatus::Judged;
}

double ratio(size_t num, size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

int score_of(const ItemResult& r) { return r.status == ItemStatus::Judged && r.verdict ? r.verdict->correctness : 0; }

} // namespace

std::map<std::string, CategoryStat> aggregate_by_category(const std::vector<ItemResult>& items) {
    std::map<std::string, CategoryStat> out;
    for (const ItemResult& r : items) {
        std::set<std::string> tags(r.categories.begin(), r.categories.end()); // a repeated tag counts once
        for (const auto& tag : tags) {
            CategoryStat& s = out[tag];
            if (r.status == ItemStatus::Unevaluated) {
                ++s.unevaluated;
                continue;
            }
            ++s.scored;
            s.correct += static_cast<size_t>(score_of(r));
        }
    }
    for (auto& [tag, s] : out) s.accuracy = ratio(s.correct, s.scored);
    return out;
}

void finalize(BenchmarkReport& report) {
    report.judged = report.failed = report.unevaluated = report.correct = 0;
    for (const ItemResult& r : report.items) {
        switch (r.status) {
        case ItemStatus::Judged: ++report.judged; break;
        case ItemStatus::Failed: ++report.failed; break;
        case ItemStatus::Unevaluated: ++report.unevaluated; break;
        }
        report.correct += static_cast<size_t>(score_of(r));
    }
    report.accuracy = ratio(report.correct, report.judged + report.failed);
    report.categories = aggregate_by_category(report.items);
}

json to_json(const BenchmarkReport& report) {
    json items = json::array();
    for (const ItemResult& r : report.items) {
        json j = {{"item_id", r.item_id}, {"categories", r.categories}, {"prediction", r.prediction},
                  {"status", to_string(r.status)}, {"agent_calls", r.agent_calls}};
        if (r.verdict) {
            j["correctness"] = r.verdict->correctness;
            j["raw_reply"] = r.verdict->raw_reply;
        }
        if (!r.error.empty()) j["error"] = r.error;
        items.push_back(std::move(j));
    }
    json cats = json::object();
    for (const auto& [tag, s] : report.categories)
        cats[tag] = {{"correct", s.correct}, {"scored", s.scored}, {"unevaluated", s.unevaluated}, {"accuracy", s.accuracy}};
    return {{"run_id", report.run_id}, {"accuracy", report.accuracy}, {"correct", report.correct},
            {"judged", report.judged}, {"failed", report.failed}, {"unevaluated", report.unevaluated},
            {"items", std::move(items)}, {"categories", std::move(cats)}, {"config", report.config}};
}

BenchmarkReport report_from_json(const json& j) {
    BenchmarkReport report;
    try {
        report.run_id = j.at("run_id").get<std::string>();
        report.config = j.value("config", json::object());
        for (const json& ji : j.at("items")) {
            ItemResult r;
            r.item_id = ji.at("item_id").get<std::string>();
            r.categories = ji.value("categories", std::vector<std::string>{});
            r.prediction = ji.value("prediction", std::string());
            r.status = status_from_string(ji.value("status", std::string("judged")));
            if (ji.contains("correctness")) r.verdict = JudgeVerdict{ji["correctness"].get<int>(), ji.value("raw_reply", std::string())};
            r.error = ji.value("error", std::string());
            r.agent_calls = ji.value("agent_calls", size_t{0});
            report.items.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::DatasetInvalid, std::string("malformed report: ") + e.what());
    }
    finalize(report);
    return report;
}

std::string format_table(const BenchmarkReport& report) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "run %s\naccuracy %.4f (%zu/%zu scored; %zu failed, %zu unevaluated)\n",
                  report.run_id.c_str(), report.accuracy, report.correct, report.judged + report.failed, report.failed,
                  report.unevaluated);
    out += buf;
    if (!report.categories.empty()) {
        size_t width = 8;
        for (const auto& [tag, s] : report.categories) width = std::max(width, tag.size());
        std::snprintf(buf, sizeof buf, "%-*s  %8s  %s\n", static_cast<int>(width), "category", "accuracy", "correct/scored");
        out += buf;
        for (const auto& [tag, s] : report.categories) {
            std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %zu/%zu\n", static_cast<int>(width), tag.c_str(), s.accuracy,
                          s.correct, s.scored);
            out += buf;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// run_benchmark

namespace {

struct Journal {
    std::map<std::string, json> transcripts;
    std::map<std::string, json> verdicts;
};

Journal read_journal(const fs::path& path) {
    Journal j;
    if (path.empty() || !fs::exists(path)) return j;
    std::istringstream in(util::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (util::trim(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        // A torn final line from an interrupted run is skipped; that item simply runs again.
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("item_id")) continue;
        std::string id = rec["item_id"].get<std::string>();
        std::string type = rec.value("type", "");
        if (type == "transcript") j.transcripts[id] = rec["transcript"];
        else if (type == "verdict") j.verdicts[id] = rec;
    }
    return j;
}

} // namespace

BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& items, const AnswerFn& answer, const JudgeConfig& judge_config,
                              gateway::ChatBackend& judge_backend, const BenchmarkOptions& options) {
    Journal journal = read_journal(options.journal);
    std::mutex journal_mu;
    auto record = [&](const json& rec) {
        if (options.journal.empty()) return;
        std::lock_guard lock(journal_mu);
        util::append_line(options.journal, rec.dump());
    };

    std::vector<ItemResult> results(items.size());
    std::atomic<size_t> next{0};
    std::exception_ptr abort;
    std::mutex abort_mu;
    auto worker = [&] {
        for (size_t i = next++; i < items.size(); i = next++) try {
            const BenchmarkItem& item = items[i];
            ItemResult& r = results[i];
            r.item_id = item.item_id;
            r.categories = item.categories;

            agents::QATranscript t;
            if (auto it = journal.transcripts.find(item.item_id); it != journal.transcripts.end()) {
                t = agents::transcript_from_json(it->second);
            } else {
                t = answer(item);
                t.item_id = item.item_id;
                record({{"type", "transcript"}, {"item_id", item.item_id}, {"transcript", agents::to_json(t)}});
            }
            r.agent_calls = t.call_log.size();
            if (!t.completed()) {
                r.status = ItemStatus::Failed;
                r.error = t.failure ? t.failure->code + ": " + t.failure->message : "pipeline did not complete";
                continue;
            }
            r.prediction = *t.final_answer;

            if (auto it = journal.verdicts.find(item.item_id); it != journal.verdicts.end()) {
                const json& v = it->second;
                r.status = status_from_string(v.value("status", std::string("judged")));
                if (r.status == ItemStatus::Judged) r.verdict = JudgeVerdict{v.at("correctness").get<int>(), v.value("raw_reply", "")};
                r.error = v.value("error", std::string());
                continue;
            }
            try {
                r.verdict = judge(item.question, r.prediction, item.ground_truth, judge_config, judge_backend);
                r.status = ItemStatus::Judged;
                record({{"type", "verdict"}, {"item_id", item.item_id}, {"status", "judged"},
                        {"correctness", r.verdict->correctness}, {"raw_reply", r.verdict->raw_reply}});
            } catch (const Error& e) {
                r.status = ItemStatus::Unevaluated;
                r.error = e.what();
                spdlog::warn("item {} unevaluated: {}", item.item_id, e.what());
                // Only a parse failure is final; a judge outage is retried on resume.
                if (e.code() == ErrorCode::JudgeParseFailure)
                    record({{"type", "verdict"}, {"item_id", item.item_id}, {"status", "unevaluated"}, {"error", r.error}});
            }
        } catch (...) {
            // Anything escaping here (e.g. a config error) ends the run; the
            // journal keeps finished items for a resume.
            std::lock_guard lock(abort_mu);
            if (!abort) abort = std::current_exception();
            next = items.size();
        }
    };
    {
        size_t width = std::clamp<size_t>(options.concurrency, 1, std::max<size_t>(1, items.size()));
        std::vector<std::jthread> pool;
        for (size_t i = 1; i < width; ++i) pool.emplace_back(worker);
        worker();
    }
    if (abort) std::rethrow_exception(abort);

    BenchmarkReport report;
    report.run_id = options.run_id;
    report.items = std::move(results);
    report.config = options.config_snapshot;
    finalize(report);
    if (report.unevaluated)
        spdlog::warn("{} item(s) could not be judged and are excluded from accuracy; see the report", report.unevaluated);
    return report;
}

// ---------------------------------------------------------------------------
// compare_runs

RunComparison compare_runs(const std::vector<BenchmarkReport>& reports) {
    if (reports.size() < 2) throw Error(ErrorCode::ConfigInvalid, "compare_runs needs at least two reports");
    RunComparison c;
    std::set<std::string> shared;
    for (const auto& r : reports[0].items) shared.insert(r.item_id);
    bool mismatch = false;
    for (size_t i = 1; i < reports.size(); ++i) {
        std::set<std::string> ids;
        for (const auto& r : reports[i].items) ids.insert(r.item_id);
        std::set<std::string> both;
        std::set_intersection(shared.begin(), shared.end(), ids.begin(), ids.end(), std::inserter(both, both.end()));
        if (both.size() != shared.size() || both.size() != ids.size()) mismatch = true;
        shared = std::move(both);
    }
    c.item_ids.assign(shared.begin(), shared.end());
    if (mismatch) {
        std::string w = std::string(to_string(ErrorCode::ItemSetMismatch)) + ": reports cover different items; comparing " +
                        std::to_string(shared.size()) + " shared item(s)";
        spdlog::warn("{}", w);
        c.warnings.push_back(std::move(w));
    }
    for (const auto& rep : reports) {
        c.run_ids.push_back(rep.run_id);
        BenchmarkReport sub;
        for (const auto& r : rep.items)
            if (shared.count(r.item_id)) sub.items.push_back(r);
        finalize(sub);
        c.accuracies.push_back(sub.accuracy);
    }
    c.deltas.assign(reports.size(), std::vector<double>(reports.size(), 0.0));
    for (size_t i = 0; i < reports.size(); ++i)
        for (size_t j = 0; j < reports.size(); ++j) c.deltas[i][j] = c.accuracies[j] - c.accuracies[i];

    std::set<std::string> keys;
    for (const auto& rep : reports)
        if (rep.config.is_object())
            for (const auto& [k, v] : rep.config.items()) keys.insert(k);
    for (const auto& k : keys) {
        const json& first = reports[0].config.is_object() && reports[0].config.contains(k) ? reports[0].config[k] : json();
        for (size_t i = 1; i < reports.size(); ++i) {
            const json& other = reports[i].config.is_object() && reports[i].config.contains(k) ? reports[i].config[k] : json();
            if (other != first) {
                c.config_differences.push_back(k);
                break;
            }
        }
    }
    return c;
}

json to_json(const RunComparison& c) {
    return {{"run_ids", c.run_ids}, {"item_ids", c.item_ids}, {"accuracies", c.accuracies}, {"deltas", c.deltas},
            {"config_differences", c.config_differences}, {"warnings", c.warnings}};
}

std::string format_table(const RunComparison& c) {
    std::string out;
    char buf[256];
    size_t width = 6;
    for (const auto& id : c.run_ids) width = std::max(width, id.size());
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %9s\n", static_cast<int>(width), "run", "accuracy", "vs first");
    out += buf;
    for (size_t i = 0; i < c.run_ids.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %+9.4f\n", static_cast<int>(width), c.run_ids[i].c_str(), c.accuracies[i],
                      c.deltas[0][i]);
        out += buf;
    }
    out += "items compared: " + std::to_string(c.item_ids.size()) + "\n";
    if (!c.config_differences.empty()) {
        out += "config differs in:";
        for (const auto& k : c.config_differences) out += " " + k;
        out += "\n";
    }
    for (const auto& w : c.warnings) out += "warning: " + w + "\n";
    return out;
}

} // namespace polydoc::eval
