#include "polydoc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "polydoc/agents.hpp"
#include "polydoc/config.hpp"
#include "polydoc/eval.hpp"
#include "polydoc/gateway.hpp"
#include "polydoc/ingest.hpp"
#include "polydoc/retrieval.hpp"
#include "polydoc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace polydoc::cli {

int exit_code(ErrorCategory category) {
    switch (category) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Ingest: return 3;
    case ErrorCategory::Network: return 4;
    case ErrorCategory::Evaluation: return 5;
    case ErrorCategory::Retrieval: return 1;
    }
    return 1;
}

namespace {

constexpr const char* kTextIndexFile = "text.pdix";
constexpr const char* kImageIndexFile = "image.pdix";

struct Common {
    std::string config_path;
    bool json_out = false;
    bool dry_run = false;
};

void emit(std::ostream& out, const Common& c, const json& j, const std::string& text) {
    if (c.json_out) out << j.dump(2) << "\n";
    else out << text;
}

config::RunConfig require_config(const std::string& path) {
    if (path.empty()) throw Error(ErrorCode::ConfigInvalid, "--config: required for this command");
    return config::load_run_config(path);
}

ingest::Corpus require_corpus(const config::RunConfig& cfg) {
    if (cfg.corpus_dir.empty()) throw Error(ErrorCode::ConfigInvalid, "corpus_dir: required for this command");
    return ingest::load_corpus(cfg.corpus_dir);
}

gateway::RetryPolicyOptions retry_options(const config::RunConfig& cfg) {
    gateway::RetryPolicyOptions o;
    o.seed = cfg.seed;
    return o;
}

/// Loaded corpus, indexes and network clients for ask/bench/ablate.
struct Runtime {
    config::RunConfig cfg;
    ingest::Corpus corpus;
    retrieval::Index text_index;
    retrieval::Index image_index;
    std::unique_ptr<gateway::SidecarClient> text_embedder;
    std::unique_ptr<gateway::SidecarClient> image_embedder;
    std::unique_ptr<gateway::HttpChatBackend> backend;
    std::unique_ptr<retrieval::Retriever> retriever;

    explicit Runtime(config::RunConfig c) : cfg(std::move(c)) {
        // Every validation that can fail runs before any client exists.
        config::pipeline_config(cfg);
        const auto& te = config::text_embedder_endpoint(cfg);
        const auto& ie = config::image_embedder_endpoint(cfg);
        corpus = require_corpus(cfg);
        text_index = retrieval::load_index(cfg.index_dir / kTextIndexFile);
        image_index = retrieval::load_index(cfg.index_dir / kImageIndexFile);
        text_embedder = std::make_unique<gateway::SidecarClient>(te, retry_options(cfg));
        image_embedder = std::make_unique<gateway::SidecarClient>(ie, retry_options(cfg));
        backend = std::make_unique<gateway::HttpChatBackend>(retry_options(cfg));
        retriever = std::make_unique<retrieval::Retriever>(corpus, text_index, image_index, *text_embedder, *image_embedder);
    }
};

std::string plural(size_t n, const char* word) { return std::to_string(n) + " " + word + (n == 1 ? "" : "s"); }

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string manifest;
    std::string out_dir;
    std::optional<int> dpi;
    size_t workers = 0;
};

int cmd_ingest(const IngestArgs& a, const Common& c, std::ostream& out) {
    std::optional<config::RunConfig> cfg;
    if (!c.config_path.empty()) cfg = config::load_run_config(c.config_path);
    int dpi = a.dpi.value_or(cfg ? cfg->dpi : config::kDefaultDpi);
    if (dpi <= 0) throw Error(ErrorCode::ConfigInvalid, "--dpi: must be positive");

    auto entries = ingest::read_manifest(a.manifest);
    if (c.dry_run) {
        json docs = json::array();
        std::string text = "would ingest " + plural(entries.size(), "document") + " into " + a.out_dir + " at " +
                           std::to_string(dpi) + " dpi\n";
        for (const auto& e : entries) {
            if (!fs::exists(e.pdf_path)) throw Error(ErrorCode::MissingSource, "doc_id '" + e.doc_id + "': no such file " + e.pdf_path.string());
            docs.push_back({{"doc_id", e.doc_id}, {"pdf_path", e.pdf_path.string()}});
            text += "  " + e.doc_id + "  " + e.pdf_path.string() + "\n";
        }
        emit(out, c, {{"dry_run", true}, {"corpus_dir", a.out_dir}, {"dpi", dpi}, {"documents", docs}}, text);
        return 0;
    }

    std::unique_ptr<gateway::SidecarClient> ocr;
    if (cfg && !cfg->ocr.empty()) ocr = std::make_unique<gateway::SidecarClient>(cfg->endpoint(cfg->ocr, "sidecar.ocr"), retry_options(*cfg));
    ingest::IngestOptions opt;
    opt.dpi = dpi;
    opt.ocr = ocr.get();
    opt.workers = a.workers;
    ingest::Corpus corpus = ingest::build_corpus(a.manifest, a.out_dir, opt);

    json docs = json::array();
    std::string text;
    for (const auto& d : corpus.documents) {
        size_t segs = 0;
        for (const auto& p : d.pages) segs += p.segments.size();
        docs.push_back({{"doc_id", d.id}, {"pages", d.pages.size()}, {"segments", segs}});
        text += "  " + d.id + ": " + plural(d.pages.size(), "page") + ", " + plural(segs, "segment") + "\n";
    }
    text = "ingested " + plural(corpus.documents.size(), "document") + " (" + plural(corpus.page_count(), "page") + ", " +
           plural(corpus.segment_count(), "segment") + ") into " + a.out_dir + "\n" + text;
    emit(out, c, {{"corpus_dir", a.out_dir}, {"documents", docs}, {"pages", corpus.page_count()}, {"segments", corpus.segment_count()}},
         text);
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_index(const std::string& corpus_override, const Common& c, std::ostream& out) {
    config::RunConfig cfg = require_config(c.config_path);
    if (!corpus_override.empty()) {
        cfg.corpus_dir = corpus_override;
        cfg.index_dir = cfg.corpus_dir / "index";
    }
    const auto& te = config::text_embedder_endpoint(cfg);
    const auto& ie = config::image_embedder_endpoint(cfg);
    ingest::Corpus corpus = require_corpus(cfg);
    if (c.dry_run) {
        emit(out, c,
             {{"dry_run", true}, {"index_dir", cfg.index_dir.string()}, {"text_items", corpus.segment_count()},
              {"image_items", corpus.page_count()}},
             "would index " + plural(corpus.segment_count(), "text segment") + " and " + plural(corpus.page_count(), "page image") +
                 " into " + cfg.index_dir.string() + "\n");
        return 0;
    }
    gateway::SidecarClient text_client(te, retry_options(cfg));
    gateway::SidecarClient image_client(ie, retry_options(cfg));
    retrieval::IndexBuildOptions opt;
    opt.cache_dir = cfg.index_dir / "cache";
    opt.batch_size = cfg.index_batch_size;
    opt.max_in_flight = cfg.index_max_in_flight;
    retrieval::IndexBuildStats ts, is;
    retrieval::Index text = retrieval::build_text_index(corpus, text_client, opt, &ts);
    retrieval::Index image = retrieval::build_image_index(corpus, image_client, opt, &is);
    retrieval::save_index(text, cfg.index_dir / kTextIndexFile);
    retrieval::save_index(image, cfg.index_dir / kImageIndexFile);
    auto stats_json = [](const retrieval::Index& idx, const retrieval::IndexBuildStats& s) {
        return json{{"embedder_id", idx.embedder_id}, {"dim", idx.dim}, {"entries", idx.entries.size()},
                    {"cache_hits", s.cache_hits}, {"embed_calls", s.embed_calls}};
    };
    std::string text_out = "text index: " + plural(text.entries.size(), "entry") + " (" + text.embedder_id + ", dim " +
                           std::to_string(text.dim) + ", " + std::to_string(ts.cache_hits) + " cached)\n" +
                           "image index: " + plural(image.entries.size(), "entry") + " (" + image.embedder_id + ", dim " +
                           std::to_string(image.dim) + ", " + std::to_string(is.cache_hits) + " cached)\n";
    emit(out, c, {{"index_dir", cfg.index_dir.string()}, {"text", stats_json(text, ts)}, {"image", stats_json(image, is)}}, text_out);
    return 0;
}

// ---------------------------------------------------------------------------

int failure_exit(const agents::QATranscript& t) {
    if (!t.failure) return 0;
    auto code = error_code_from_string(t.failure->code);
    return code ? exit_code(category_of(*code)) : 1;
}

int cmd_ask(const std::string& question, const std::string& doc_id, std::string transcript_path, const Common& c,
            std::ostream& out, std::ostream& err) {
    if (util::trim(question).empty()) throw Error(ErrorCode::ConfigInvalid, "--question: must not be empty");
    config::RunConfig cfg = require_config(c.config_path);
    if (c.dry_run) {
        agents::PipelineConfig p = config::pipeline_config(cfg);
        config::text_embedder_endpoint(cfg);
        config::image_embedder_endpoint(cfg);
        ingest::Corpus corpus = require_corpus(cfg);
        if (!doc_id.empty() && !corpus.find(doc_id)) throw Error(ErrorCode::DatasetInvalid, "--doc-id: unknown document '" + doc_id + "'");
        std::vector<std::string> order;
        if (p.enable_general_critical) order.insert(order.end(), {"general", "critical"});
        if (p.enable_text_agent) order.push_back("text");
        if (p.enable_image_agent) order.push_back("image");
        order.push_back("summarizing");
        std::string text = "would retrieve top-" + std::to_string(p.k) + " per modality, then call:";
        for (const auto& r : order) text += " " + r;
        emit(out, c, {{"dry_run", true}, {"k", p.k}, {"calls", order}}, text + "\n");
        return 0;
    }
    Runtime rt(std::move(cfg));
    if (!doc_id.empty() && !rt.corpus.find(doc_id))
        throw Error(ErrorCode::DatasetInvalid, "--doc-id: unknown document '" + doc_id + "'");
    agents::PipelineConfig p = config::pipeline_config(rt.cfg);
    agents::QATranscript t = agents::answer_question(question, *rt.retriever, p, *rt.backend, doc_id);
    if (transcript_path.empty()) transcript_path = (rt.cfg.output_dir / "ask_transcripts.jsonl").string();
    fs::path tp(transcript_path);
    if (tp.has_parent_path()) fs::create_directories(tp.parent_path());
    util::append_line(tp, agents::to_json(t).dump());
    if (c.json_out) {
        out << agents::to_json(t).dump(2) << "\n";
    } else if (t.final_answer) {
        out << *t.final_answer << "\n";
    }
    if (t.failure) err << "error: " << t.failure->stage << " stage failed: " << t.failure->message << "\n";
    return failure_exit(t);
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string dataset;
    std::string run_id;
};

void check_dataset_docs(const std::vector<eval::BenchmarkItem>& items, const ingest::Corpus& corpus) {
    for (const auto& it : items)
        if (!corpus.find(it.doc_id))
            throw Error(ErrorCode::DatasetInvalid, "item '" + it.item_id + "' references unknown doc_id '" + it.doc_id + "'");
}

eval::BenchmarkReport run_variant(Runtime& rt, const config::RunConfig& cfg, const std::vector<eval::BenchmarkItem>& items,
                                  const std::string& run_id, const fs::path& dir) {
    agents::PipelineConfig p = config::pipeline_config(cfg);
    eval::JudgeConfig jc = config::judge_config(cfg);
    fs::create_directories(dir);
    eval::BenchmarkOptions opt;
    opt.run_id = run_id;
    opt.journal = dir / "journal.jsonl";
    opt.concurrency = cfg.concurrency;
    opt.config_snapshot = config::snapshot(cfg);
    auto answer = [&](const eval::BenchmarkItem& item) {
        return agents::answer_question(item.question, *rt.retriever, p, *rt.backend, item.doc_id);
    };
    eval::BenchmarkReport report = eval::run_benchmark(items, answer, jc, *rt.backend, opt);
    util::write_file_atomic(dir / "report.json", eval::to_json(report).dump(2) + "\n");
    util::write_file_atomic(dir / "report.txt", eval::format_table(report));
    return report;
}

config::RunConfig variant_config(config::RunConfig cfg, std::string_view variant) {
    if (variant == "no_text") cfg.text_agent = false;
    else if (variant == "no_image") cfg.image_agent = false;
    else if (variant == "no_general_critical") cfg.general_critical = false;
    else {
        cfg.text_agent = cfg.image_agent = cfg.general_critical = true;
    }
    return cfg;
}

int calls_per_item(const config::RunConfig& cfg) {
    return (cfg.general_critical ? 2 : 0) + (cfg.text_agent ? 1 : 0) + (cfg.image_agent ? 1 : 0) + 1;
}

int cmd_bench(const BenchArgs& a, const Common& c, std::ostream& out) {
    config::RunConfig cfg = require_config(c.config_path);
    auto items = eval::load_dataset(a.dataset);
    std::string run_id = a.run_id.empty() ? "bench" : a.run_id;
    if (c.dry_run) {
        config::pipeline_config(cfg);
        config::judge_config(cfg);
        config::text_embedder_endpoint(cfg);
        config::image_embedder_endpoint(cfg);
        check_dataset_docs(items, require_corpus(cfg));
        int per = calls_per_item(cfg);
        emit(out, c, {{"dry_run", true}, {"run_id", run_id}, {"items", items.size()}, {"agent_calls_per_item", per}},
             "would run " + plural(items.size(), "item") + " (" + std::to_string(per) + " agent calls and 1 judge call each) as " +
                 run_id + "\n");
        return 0;
    }
    config::judge_config(cfg);
    Runtime rt(cfg);
    check_dataset_docs(items, rt.corpus);
    eval::BenchmarkReport report = run_variant(rt, rt.cfg, items, run_id, rt.cfg.output_dir / run_id);
    json j = eval::to_json(report);
    emit(out, c, j, eval::format_table(report));
    return report.any_failed() ? exit_code(ErrorCategory::Evaluation) : 0;
}

int cmd_ablate(const BenchArgs& a, const Common& c, std::ostream& out) {
    config::RunConfig cfg = require_config(c.config_path);
    auto items = eval::load_dataset(a.dataset);
    std::string run_id = a.run_id.empty() ? "ablate" : a.run_id;
    if (c.dry_run) {
        config::judge_config(cfg);
        config::text_embedder_endpoint(cfg);
        config::image_embedder_endpoint(cfg);
        check_dataset_docs(items, require_corpus(cfg));
        json variants = json::array();
        std::string text = "would run " + plural(items.size(), "item") + " under each variant:\n";
        for (const char* v : kAblationVariants) {
            config::RunConfig vc = variant_config(cfg, v);
            config::pipeline_config(vc);
            variants.push_back({{"variant", v}, {"agent_calls_per_item", calls_per_item(vc)}});
            text += std::string("  ") + v + ": " + std::to_string(calls_per_item(vc)) + " agent calls per item\n";
        }
        emit(out, c, {{"dry_run", true}, {"run_id", run_id}, {"items", items.size()}, {"variants", variants}}, text);
        return 0;
    }
    config::judge_config(cfg);
    Runtime rt(cfg);
    check_dataset_docs(items, rt.corpus);
    std::vector<eval::BenchmarkReport> reports;
    json rows = json::array();
    bool failed = false;
    for (const char* v : kAblationVariants) {
        config::RunConfig vc = variant_config(rt.cfg, v);
        eval::BenchmarkReport r = run_variant(rt, vc, items, v, rt.cfg.output_dir / run_id / v);
        failed = failed || r.any_failed();
        json calls = json::array();
        for (const auto& it : r.items) calls.push_back(it.agent_calls);
        rows.push_back({{"variant", v}, {"accuracy", r.accuracy}, {"agent_calls", calls}});
        reports.push_back(std::move(r));
    }
    eval::RunComparison cmp = eval::compare_runs(reports);
    json j = {{"run_id", run_id}, {"variants", rows}, {"comparison", eval::to_json(cmp)}};
    util::write_file_atomic(rt.cfg.output_dir / run_id / "comparison.json", j.dump(2) + "\n");
    emit(out, c, j, eval::format_table(cmp));
    return failed ? exit_code(ErrorCategory::Evaluation) : 0;
}

int cmd_compare(const std::vector<std::string>& paths, const Common& c, std::ostream& out) {
    std::vector<eval::BenchmarkReport> reports;
    for (const auto& p : paths) {
        json j = json::parse(util::read_file(p), nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::DatasetInvalid, p + ": not valid JSON");
        reports.push_back(eval::report_from_json(j));
    }
    eval::RunComparison cmp = eval::compare_runs(reports);
    emit(out, c, eval::to_json(cmp), eval::format_table(cmp));
    return 0;
}

void init_logging(int verbosity) {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("polydoc");
        spdlog::set_default_logger(logger);
    });
    spdlog::set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-agent question answering over PDF corpora"};
    app.name("polydoc");
    app.require_subcommand(1);
    int verbosity = 0;
    app.add_flag("-v,--verbose", verbosity, "More logging (repeat for debug)");

    Common common;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("-c,--config", common.config_path, "Run configuration (JSON)");
        if (config_required) opt->required();
        sub->add_flag("--json", common.json_out, "Machine-readable output");
        sub->add_flag("--dry-run", common.dry_run, "Validate and print the plan without network calls or writes");
    };

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "Extract text and page images from the PDFs in a manifest");
    ingest_cmd->add_option("-m,--manifest", ingest_args.manifest, "JSON list of {doc_id, pdf_path}")->required();
    ingest_cmd->add_option("-o,--out", ingest_args.out_dir, "Corpus directory")->required();
    ingest_cmd->add_option("--dpi", ingest_args.dpi, "Render resolution");
    ingest_cmd->add_option("--workers", ingest_args.workers, "Parallel documents (0 = all cores)");
    add_common(ingest_cmd, false);

    std::string corpus_override;
    auto* index_cmd = app.add_subcommand("index", "Embed the corpus and write text and image indexes");
    index_cmd->add_option("--corpus", corpus_override, "Corpus directory (overrides the config)");
    add_common(index_cmd, true);

    std::string question, doc_id, transcript_path;
    auto* ask_cmd = app.add_subcommand("ask", "Answer one question");
    ask_cmd->add_option("-q,--question", question, "Question text")->required();
    ask_cmd->add_option("--doc-id", doc_id, "Restrict retrieval to one document");
    ask_cmd->add_option("--transcript", transcript_path, "Transcript JSONL to append to");
    add_common(ask_cmd, true);

    BenchArgs bench_args;
    auto* bench_cmd = app.add_subcommand("bench", "Run and judge a benchmark dataset");
    bench_cmd->add_option("-d,--dataset", bench_args.dataset, "Dataset JSONL")->required();
    bench_cmd->add_option("--run-id", bench_args.run_id, "Run name; reusing one resumes it");
    add_common(bench_cmd, true);

    BenchArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run the dataset under each agent ablation and compare");
    ablate_cmd->add_option("-d,--dataset", ablate_args.dataset, "Dataset JSONL")->required();
    ablate_cmd->add_option("--run-id", ablate_args.run_id, "Run name; reusing one resumes it");
    add_common(ablate_cmd, true);

    std::vector<std::string> report_paths;
    auto* compare_cmd = app.add_subcommand("compare", "Compare benchmark reports");
    compare_cmd->add_option("reports", report_paths, "report.json files")->required()->expected(2, -1);
    compare_cmd->add_flag("--json", common.json_out, "Machine-readable output");

    auto* default_cmd = app.add_subcommand("default-config", "Print a configuration with every default filled in");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : exit_code(ErrorCategory::Config);
    }
    init_logging(verbosity);

    try {
        if (*ingest_cmd) return cmd_ingest(ingest_args, common, out);
        if (*index_cmd) return cmd_index(corpus_override, common, out);
        if (*ask_cmd) return cmd_ask(question, doc_id, transcript_path, common, out, err);
        if (*bench_cmd) return cmd_bench(bench_args, common, out);
        if (*ablate_cmd) return cmd_ablate(ablate_args, common, out);
        if (*compare_cmd) return cmd_compare(report_paths, common, out);
        if (*default_cmd) {
            out << config::default_config_document().dump(2) << "\n";
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace polydoc::cli
