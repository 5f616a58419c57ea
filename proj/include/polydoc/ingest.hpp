#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace polydoc::ingest {

constexpr int kDefaultRenderDpi = 144;

struct TextSegment {
    std::string doc_id;
    int page_index = 0;
    int segment_index = 0;
    std::string content;
};

struct PageImage {
    std::string doc_id;
    int page_index = 0;
    std::filesystem::path file_ref;
    int width = 0;
    int height = 0;
    int render_dpi = kDefaultRenderDpi;
};

struct Page {
    std::string doc_id;
    int index = 0;
    std::vector<TextSegment> segments;
    PageImage image;
};

struct Document {
    std::string id;
    std::filesystem::path source_path;
    std::vector<Page> pages;
};

struct Corpus {
    std::vector<Document> documents;
    std::filesystem::path manifest_path; // <root>/manifest.json
    std::filesystem::path root;

    const Document* find(std::string_view doc_id) const;
    const Page* find_page(std::string_view doc_id, int page_index) const;
    const TextSegment* find_segment(std::string_view doc_id, int page_index, int segment_index) const;
    size_t page_count() const;
    size_t segment_count() const;
};

/// Transcribes a rasterized page. Implemented over HTTP by the sidecar client.
class OcrClient {
public:
    virtual ~OcrClient() = default;
    virtual std::string ocr(const std::string& png) = 0;
};

struct PageText {
    int page_index = 0;
    std::string text;
    bool from_ocr = false;
};

/// Embedded text per physical page. Pages without embedded text are rendered
/// at `ocr_dpi` and sent to `ocr`; with no OCR client such a page raises
/// OcrUnavailable.
std::vector<PageText> extract_text(const std::filesystem::path& source, OcrClient* ocr,
                                   int ocr_dpi = kDefaultRenderDpi);

/// Splits on blank lines, trims each piece, drops empty pieces.
std::vector<std::string> segment_page_text(std::string_view raw);

/// Writes `<out_dir>/<doc_id>/page_<i>.png` for every page.
std::vector<PageImage> rasterize_pages(const std::filesystem::path& source, const std::string& doc_id,
                                       const std::filesystem::path& out_dir, int dpi = kDefaultRenderDpi);

struct ManifestEntry {
    std::string doc_id;
    std::filesystem::path pdf_path;
};

/// Reads a manifest: a JSON list of {"doc_id", "pdf_path"} objects, or an
/// object holding such a list under "documents". Relative paths resolve
/// against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

struct IngestOptions {
    int dpi = kDefaultRenderDpi;
    OcrClient* ocr = nullptr;
    size_t workers = 0; // 0 = hardware concurrency
};

/// Ingests every manifest entry into `corpus_dir`, holding an exclusive lock on
/// `<corpus_dir>/.lock` for the duration.
Corpus build_corpus(const std::filesystem::path& manifest, const std::filesystem::path& corpus_dir,
                    const IngestOptions& options = {});

Corpus load_corpus(const std::filesystem::path& corpus_dir);

} // namespace polydoc::ingest
