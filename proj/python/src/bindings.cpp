#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "polydoc/agents.hpp"
#include "polydoc/cli.hpp"
#include "polydoc/config.hpp"
#include "polydoc/error.hpp"
#include "polydoc/eval.hpp"
#include "polydoc/ingest.hpp"
#include "polydoc/retrieval.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace polydoc;

namespace {

using Rows = std::vector<std::vector<float>>;

PyObject* error_type = nullptr;

retrieval::TokenEmbeddingMatrix to_matrix(const Rows& rows) {
    std::vector<float> values;
    size_t dim = rows.empty() ? 0 : rows[0].size();
    for (const auto& r : rows) {
        if (r.size() != dim) throw Error(ErrorCode::ShapeError, "rows have different lengths");
        values.insert(values.end(), r.begin(), r.end());
    }
    return {rows.size(), dim, std::move(values)};
}

// JSON crosses the boundary as text; the Python wrapper decodes it.
std::string corpus_json(const ingest::Corpus& c) {
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& d : c.documents) {
        nlohmann::json pages = nlohmann::json::array();
        for (const auto& p : d.pages) {
            nlohmann::json segs = nlohmann::json::array();
            for (const auto& s : p.segments) segs.push_back(s.content);
            pages.push_back({{"index", p.index}, {"segments", segs}, {"image", p.image.file_ref.string()},
                             {"width", p.image.width}, {"height", p.image.height}, {"dpi", p.image.render_dpi}});
        }
        docs.push_back({{"doc_id", d.id}, {"source", d.source_path.string()}, {"pages", pages}});
    }
    return nlohmann::json{{"root", c.root.string()}, {"documents", docs}}.dump();
}

eval::ItemResult item_from_json(const nlohmann::json& j) {
    eval::ItemResult r;
    r.item_id = j.at("item_id").get<std::string>();
    r.categories = j.value("categories", std::vector<std::string>{});
    std::string status = j.value("status", std::string("judged"));
    if (status == "judged") {
        r.status = eval::ItemStatus::Judged;
        r.verdict = eval::JudgeVerdict{j.at("correctness").get<int>(), ""};
    } else if (status == "failed") {
        r.status = eval::ItemStatus::Failed;
    } else if (status == "unevaluated") {
        r.status = eval::ItemStatus::Unevaluated;
    } else {
        throw Error(ErrorCode::DatasetInvalid, "item '" + r.item_id + "': unknown status '" + status + "'");
    }
    return r;
}

} // namespace

PYBIND11_MODULE(_polydoc, m) {
    m.doc() = "Native core of the polydoc document QA engine";

    // Kept alive for the interpreter's lifetime by the module attribute.
    error_type = py::exception<Error>(m, "Error").ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    m.def("late_interaction_score", [](const Rows& q, const Rows& d) {
        return retrieval::late_interaction_score(to_matrix(q), to_matrix(d));
    }, py::arg("query"), py::arg("item"), "Sum over query rows of the best dot product against any item row.");

    m.def("top_k", [](const std::vector<std::tuple<std::string, int, int, double>>& scores, size_t k) {
        std::vector<retrieval::ScoredItem> items;
        for (const auto& [doc, page, seg, score] : scores) items.push_back({{doc, page, seg}, score});
        std::vector<std::tuple<std::string, int, int, double>> out;
        for (const auto& s : retrieval::top_k(std::move(items), k))
            out.emplace_back(s.key.doc_id, s.key.page_index, s.key.segment_index, s.score);
        return out;
    }, py::arg("scores"), py::arg("k"), "Best k of (doc_id, page, segment, score) tuples, ties by ascending key.");

    m.def("parse_critical", [](const std::string& reply) -> std::optional<std::pair<std::string, std::string>> {
        auto c = agents::parse_critical(reply);
        if (!c) return std::nullopt;
        return std::pair{c->text_hint, c->image_hint};
    }, py::arg("reply"));
    m.def("parse_answer", &agents::parse_answer, py::arg("reply"));
    m.def("parse_correctness", &agents::parse_correctness, py::arg("reply"));

    m.def("default_prompt", [](const std::string& role) {
        auto r = agents::role_from_string(role);
        if (!r) throw Error(ErrorCode::ConfigInvalid, "unknown role '" + role + "'");
        return std::string(agents::default_prompt(*r));
    }, py::arg("role"));
    m.def("default_evaluation_prompt", [] { return std::string(agents::default_evaluation_prompt()); });
    m.def("fill_evaluation_prompt", [](const std::string& tmpl, const std::string& q, const std::string& a, const std::string& gt) {
        return agents::fill_evaluation_prompt(tmpl, q, a, gt);
    }, py::arg("template"), py::arg("question"), py::arg("answer"), py::arg("ground_truth"));

    m.def("_build_corpus", [](const fs::path& manifest, const fs::path& out, int dpi, size_t workers) {
        ingest::IngestOptions o;
        o.dpi = dpi;
        o.workers = workers;
        ingest::Corpus c;
        {
            py::gil_scoped_release release;
            c = ingest::build_corpus(manifest, out, o);
        }
        return corpus_json(c);
    }, py::arg("manifest"), py::arg("corpus_dir"), py::arg("dpi") = config::kDefaultDpi, py::arg("workers") = 0);
    m.def("_load_corpus", [](const fs::path& root) { return corpus_json(ingest::load_corpus(root)); }, py::arg("corpus_dir"));

    m.def("_load_dataset", [](const fs::path& path) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& it : eval::load_dataset(path))
            out.push_back({{"item_id", it.item_id}, {"question", it.question}, {"doc_id", it.doc_id},
                           {"ground_truth", it.ground_truth}, {"categories", it.categories}});
        return out.dump();
    }, py::arg("path"));

    m.def("_aggregate", [](const std::string& items_json) {
        eval::BenchmarkReport r;
        for (const auto& j : nlohmann::json::parse(items_json)) r.items.push_back(item_from_json(j));
        eval::finalize(r);
        return eval::to_json(r).dump();
    }, py::arg("items_json"));

    m.def("_default_config", [] { return config::default_config_document().dump(); });
    m.def("_validate_config", [](const std::string& doc, const fs::path& base) {
        return config::snapshot(config::parse_run_config(nlohmann::json::parse(doc), base)).dump();
    }, py::arg("document"), py::arg("base_dir") = fs::path());

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int rc;
        {
            py::gil_scoped_release release;
            rc = cli::run(args, out, err);
        }
        return std::make_tuple(rc, out.str(), err.str());
    }, py::arg("args"), "Runs a polydoc command; returns (exit_code, stdout, stderr).");

    m.attr("DEFAULT_TOP_K") = config::kDefaultTopK;
    m.attr("DEFAULT_DPI") = config::kDefaultDpi;
    m.attr("DEFAULT_MAX_NEW_TOKENS") = config::kDefaultMaxNewTokens;
}
