#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <random>

#include <unistd.h>

#include "pdf_writer.hpp"

namespace fs = std::filesystem;

namespace polydoc::testing {

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd() % 100000));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

fs::path write_manifest(const fs::path& dir, const std::vector<FixtureDoc>& docs) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& d : docs) {
        fs::path pdf = dir / "pdfs" / (d.doc_id + ".pdf");
        write_pdf(pdf, make_text_pdf(d.pages));
        m.push_back({{"doc_id", d.doc_id}, {"pdf_path", "pdfs/" + d.doc_id + ".pdf"}});
    }
    fs::path manifest = dir / "manifest_in.json";
    write_text(manifest, m.dump(2));
    return manifest;
}

ingest::Corpus make_corpus(const fs::path& dir, const std::vector<FixtureDoc>& docs, int dpi, ingest::OcrClient* ocr) {
    ingest::IngestOptions opt;
    opt.dpi = dpi;
    opt.ocr = ocr;
    return ingest::build_corpus(write_manifest(dir, docs), dir / "corpus", opt);
}

ingest::Corpus synthetic_corpus(const fs::path& dir, int pages, const std::string& doc_id) {
    static const char* kWords[] = {"revenue", "chart", "table", "growth", "margin", "forecast", "region", "quarter",
                                   "cost", "profit", "sales", "index", "figure", "summary", "market", "share"};
    std::mt19937 rng(static_cast<unsigned>(pages) * 7919u);
    FixtureDoc d{doc_id, {}};
    for (int p = 0; p < pages; ++p) {
        std::string text;
        for (int s = 0; s < 2; ++s) {
            if (s) text += "\n\n";
            text += "page " + std::to_string(p) + " part " + std::to_string(s);
            for (int w = 0; w < 4; ++w) text += std::string(" ") + kWords[rng() % 16];
        }
        d.pages.push_back(text);
    }
    return make_corpus(dir, {d});
}

} // namespace polydoc::testing
