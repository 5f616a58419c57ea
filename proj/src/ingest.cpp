#include "polydoc/ingest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "polydoc/error.hpp"
#include "polydoc/pdf/document.hpp"
#include "polydoc/pdf/page_text.hpp"
#include "polydoc/pdf/render.hpp"
#include "polydoc/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace polydoc::ingest {

// ---------------------------------------------------------------------------
// Corpus lookups

const Document* Corpus::find(std::string_view doc_id) const {
    for (const auto& d : documents)
        if (d.id == doc_id) return &d;
    return nullptr;
}

const Page* Corpus::find_page(std::string_view doc_id, int page_index) const {
    const Document* d = find(doc_id);
    if (!d || page_index < 0 || static_cast<size_t>(page_index) >= d->pages.size()) return nullptr;
    return &d->pages[static_cast<size_t>(page_index)];
}

const TextSegment* Corpus::find_segment(std::string_view doc_id, int page_index, int segment_index) const {
    const Page* p = find_page(doc_id, page_index);
    if (!p || segment_index < 0 || static_cast<size_t>(segment_index) >= p->segments.size()) return nullptr;
    return &p->segments[static_cast<size_t>(segment_index)];
}

size_t Corpus::page_count() const {
    size_t n = 0;
    for (const auto& d : documents) n += d.pages.size();
    return n;
}

size_t Corpus::segment_count() const {
    size_t n = 0;
    for (const auto& d : documents)
        for (const auto& p : d.pages) n += p.segments.size();
    return n;
}

namespace {

pdf::Document open_pdf(const fs::path& source) {
    if (!fs::exists(source)) throw Error(ErrorCode::MissingSource, "no such file: " + source.string());
    pdf::Document doc = pdf::Document::open(source);
    if (doc.page_count() == 0) throw Error(ErrorCode::NoPages, source.string() + " has no pages");
    return doc;
}

std::vector<PageText> extract_from(const pdf::Document& doc, const fs::path& source, OcrClient* ocr, int ocr_dpi) {
    std::vector<PageText> out;
    out.reserve(doc.page_count());
    for (size_t i = 0; i < doc.page_count(); ++i) {
        PageText pt;
        pt.page_index = static_cast<int>(i);
        pt.text = pdf::extract_page_text(doc, i);
        if (util::trim(pt.text).empty()) {
            if (!ocr)
                throw Error(ErrorCode::OcrUnavailable,
                            source.string() + " page " + std::to_string(i) + " has no embedded text and no OCR client is configured");
            pt.text = ocr->ocr(pdf::render_page(doc, i, ocr_dpi).png);
            pt.from_ocr = true;
        }
        out.push_back(std::move(pt));
    }
    return out;
}

std::vector<PageImage> rasterize_to(const pdf::Document& doc, const std::string& doc_id, const fs::path& out_dir, int dpi) {
    if (dpi <= 0) throw Error(ErrorCode::ConfigInvalid, "dpi must be positive");
    fs::path dir = out_dir / doc_id;
    fs::create_directories(dir);
    std::vector<PageImage> images;
    for (size_t i = 0; i < doc.page_count(); ++i) {
        pdf::RenderedPage r = pdf::render_page(doc, i, dpi);
        PageImage img;
        img.doc_id = doc_id;
        img.page_index = static_cast<int>(i);
        img.file_ref = dir / ("page_" + std::to_string(i) + ".png");
        img.width = r.width;
        img.height = r.height;
        img.render_dpi = dpi;
        util::write_file_atomic(img.file_ref, r.png);
        images.push_back(std::move(img));
    }
    return images;
}

bool valid_doc_id(const std::string& id) {
    if (id.empty() || id == "." || id == ".." || id.size() > 200) return false;
    return std::none_of(id.begin(), id.end(), [](char c) { return c == '/' || c == '\\' || c == '\0' || c == '\n'; });
}

class CorpusLock {
public:
    explicit CorpusLock(const fs::path& dir) {
        fs::path p = dir / ".lock";
        fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error(ErrorCode::CorpusInvalid, "cannot open lock file " + p.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            throw Error(ErrorCode::CorpusLocked, dir.string() + " is being written by another ingest process");
        }
    }
    ~CorpusLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    CorpusLock(const CorpusLock&) = delete;
    CorpusLock& operator=(const CorpusLock&) = delete;

private:
    int fd_ = -1;
};

Document ingest_one(const ManifestEntry& entry, const fs::path& corpus_dir, const IngestOptions& opt) {
    pdf::Document pdf_doc = open_pdf(entry.pdf_path);
    std::vector<PageText> texts = extract_from(pdf_doc, entry.pdf_path, opt.ocr, opt.dpi);

    fs::path doc_dir = corpus_dir / entry.doc_id;
    fs::remove_all(doc_dir); // stale pages from an earlier, longer version must not survive
    std::vector<PageImage> images = rasterize_to(pdf_doc, entry.doc_id, corpus_dir, opt.dpi);

    Document doc;
    doc.id = entry.doc_id;
    doc.source_path = entry.pdf_path;
    std::string jsonl;
    for (size_t i = 0; i < texts.size(); ++i) {
        Page page;
        page.doc_id = entry.doc_id;
        page.index = static_cast<int>(i);
        page.image = images[i];
        auto pieces = segment_page_text(texts[i].text);
        for (size_t j = 0; j < pieces.size(); ++j) {
            TextSegment seg{entry.doc_id, page.index, static_cast<int>(j), std::move(pieces[j])};
            json line = {{"doc_id", seg.doc_id}, {"page_index", seg.page_index},
                         {"segment_index", seg.segment_index}, {"content", seg.content}};
            jsonl += line.dump();
            jsonl += '\n';
            page.segments.push_back(std::move(seg));
        }
        doc.pages.push_back(std::move(page));
    }
    util::write_file_atomic(doc_dir / "segments.jsonl", jsonl);
    return doc;
}

} // namespace

std::vector<PageText> extract_text(const fs::path& source, OcrClient* ocr, int ocr_dpi) {
    pdf::Document doc = open_pdf(source);
    return extract_from(doc, source, ocr, ocr_dpi);
}

std::vector<std::string> segment_page_text(std::string_view raw) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        std::string_view t = util::trim(current);
        if (!t.empty()) out.emplace_back(t);
        current.clear();
    };
    size_t pos = 0;
    while (pos <= raw.size()) {
        size_t nl = raw.find('\n', pos);
        std::string_view line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (util::trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) current += '\n';
            current += line;
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    flush();
    return out;
}

std::vector<PageImage> rasterize_pages(const fs::path& source, const std::string& doc_id, const fs::path& out_dir, int dpi) {
    pdf::Document doc = open_pdf(source);
    return rasterize_to(doc, doc_id, out_dir, dpi);
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
    if (!fs::exists(manifest)) throw Error(ErrorCode::MissingSource, "manifest not found: " + manifest.string());
    json j;
    try {
        j = json::parse(util::read_file(manifest));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorpusInvalid, "manifest " + manifest.string() + ": " + e.what());
    }
    if (j.is_object() && j.contains("documents")) j = j["documents"];
    if (!j.is_array()) throw Error(ErrorCode::CorpusInvalid, "manifest must be a list of {doc_id, pdf_path}");
    fs::path base = manifest.parent_path();
    std::vector<ManifestEntry> out;
    std::set<std::string> seen;
    for (size_t i = 0; i < j.size(); ++i) {
        const json& e = j[i];
        if (!e.is_object() || !e.contains("doc_id") || !e["doc_id"].is_string() || !e.contains("pdf_path") ||
            !e["pdf_path"].is_string())
            throw Error(ErrorCode::CorpusInvalid, "manifest entry " + std::to_string(i) + " needs string doc_id and pdf_path");
        ManifestEntry m{e["doc_id"].get<std::string>(), fs::path(e["pdf_path"].get<std::string>())};
        if (!valid_doc_id(m.doc_id)) throw Error(ErrorCode::CorpusInvalid, "invalid doc_id '" + m.doc_id + "'");
        if (!seen.insert(m.doc_id).second) throw Error(ErrorCode::DuplicateDocId, "doc_id '" + m.doc_id + "' appears more than once");
        if (m.pdf_path.is_relative()) m.pdf_path = base / m.pdf_path;
        out.push_back(std::move(m));
    }
    return out;
}

Corpus build_corpus(const fs::path& manifest, const fs::path& corpus_dir, const IngestOptions& options) {
    std::vector<ManifestEntry> entries = read_manifest(manifest);
    fs::create_directories(corpus_dir);
    CorpusLock lock(corpus_dir);

    std::vector<Document> docs(entries.size());
    std::vector<std::exception_ptr> errors(entries.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < entries.size(); i = next++) {
            try {
                docs[i] = ingest_one(entries[i], corpus_dir, options);
                spdlog::debug("ingested {} ({} pages)", entries[i].doc_id, docs[i].pages.size());
            } catch (const Error& e) {
                errors[i] = std::make_exception_ptr(e.annotated("doc_id '" + entries[i].doc_id + "'"));
            } catch (const std::exception& e) {
                errors[i] = std::make_exception_ptr(
                    Error(ErrorCode::UnreadablePdf, "doc_id '" + entries[i].doc_id + "': " + e.what()));
            }
        }
    };
    size_t width = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
    width = std::min(width, std::max<size_t>(entries.size(), 1));
    {
        std::vector<std::jthread> pool;
        for (size_t i = 1; i < width; ++i) pool.emplace_back(worker);
        worker();
    }
    // Report the first failing document in manifest order so errors are reproducible.
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    json m;
    m["version"] = 1;
    m["render_dpi"] = options.dpi;
    m["documents"] = json::array();
    for (const auto& d : docs)
        m["documents"].push_back({{"doc_id", d.id}, {"source_path", d.source_path.string()}, {"page_count", d.pages.size()}});
    util::write_file_atomic(corpus_dir / "manifest.json", m.dump(2) + "\n");

    Corpus corpus;
    corpus.documents = std::move(docs);
    corpus.root = corpus_dir;
    corpus.manifest_path = corpus_dir / "manifest.json";
    return corpus;
}

Corpus load_corpus(const fs::path& corpus_dir) {
    fs::path mpath = corpus_dir / "manifest.json";
    if (!fs::exists(mpath)) throw Error(ErrorCode::CorpusInvalid, "no manifest.json in " + corpus_dir.string());
    Corpus corpus;
    corpus.root = corpus_dir;
    corpus.manifest_path = mpath;
    try {
        json m = json::parse(util::read_file(mpath));
        int dpi = m.value("render_dpi", kDefaultRenderDpi);
        for (const auto& jd : m.at("documents")) {
            Document d;
            d.id = jd.at("doc_id").get<std::string>();
            d.source_path = jd.value("source_path", std::string());
            size_t pages = jd.at("page_count").get<size_t>();
            for (size_t i = 0; i < pages; ++i) {
                Page p;
                p.doc_id = d.id;
                p.index = static_cast<int>(i);
                p.image.doc_id = d.id;
                p.image.page_index = p.index;
                p.image.file_ref = corpus_dir / d.id / ("page_" + std::to_string(i) + ".png");
                p.image.render_dpi = dpi;
                d.pages.push_back(std::move(p));
            }
            fs::path seg_path = corpus_dir / d.id / "segments.jsonl";
            if (fs::exists(seg_path)) {
                for (const json& js : util::read_jsonl(seg_path)) {
                    TextSegment s{js.at("doc_id").get<std::string>(), js.at("page_index").get<int>(),
                                  js.at("segment_index").get<int>(), js.at("content").get<std::string>()};
                    if (s.doc_id != d.id || s.page_index < 0 || static_cast<size_t>(s.page_index) >= pages)
                        throw Error(ErrorCode::CorpusInvalid, "segment outside its document in " + seg_path.string());
                    auto& segs = d.pages[static_cast<size_t>(s.page_index)].segments;
                    if (s.segment_index != static_cast<int>(segs.size()))
                        throw Error(ErrorCode::CorpusInvalid, "segments out of order in " + seg_path.string());
                    segs.push_back(std::move(s));
                }
            }
            corpus.documents.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CorpusInvalid, mpath.string() + ": " + e.what());
    }
    // Image dimensions come from the PNG IHDR chunk (bytes 16..23).
    for (auto& d : corpus.documents) {
        for (auto& p : d.pages) {
            std::ifstream in(p.image.file_ref, std::ios::binary);
            unsigned char hdr[24] = {};
            if (!in.read(reinterpret_cast<char*>(hdr), sizeof hdr))
                throw Error(ErrorCode::CorpusInvalid, "missing page image " + p.image.file_ref.string());
            auto be32 = [&](int off) { return (hdr[off] << 24) | (hdr[off + 1] << 16) | (hdr[off + 2] << 8) | hdr[off + 3]; };
            p.image.width = be32(16);
            p.image.height = be32(20);
        }
    }
    return corpus;
}

} // namespace polydoc::ingest
