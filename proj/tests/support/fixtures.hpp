#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polydoc/ingest.hpp"

namespace polydoc::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "polydoc");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct FixtureDoc {
    std::string doc_id;
    std::vector<std::string> pages; // page text, paragraphs split on "\n\n"
};

/// Writes each document as a PDF plus a manifest under `dir`; returns the
/// manifest path.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const std::vector<FixtureDoc>& docs);

/// Writes PDFs and a manifest, then ingests into `dir/corpus` at `dpi`.
ingest::Corpus make_corpus(const std::filesystem::path& dir, const std::vector<FixtureDoc>& docs, int dpi = 36,
                           ingest::OcrClient* ocr = nullptr);

/// OCR client returning a fixed transcription.
class StaticOcr : public ingest::OcrClient {
public:
    explicit StaticOcr(std::string text = {}) : text_(std::move(text)) {}
    std::string ocr(const std::string&) override {
        ++calls;
        return text_;
    }
    std::atomic<int> calls{0};

private:
    std::string text_;
};

/// A corpus of `pages` single-document pages with two segments each, rendered
/// at a low dpi to keep tests fast.
ingest::Corpus synthetic_corpus(const std::filesystem::path& dir, int pages, const std::string& doc_id = "doc");

void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace polydoc::testing
