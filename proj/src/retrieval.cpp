#include "polydoc/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

namespace fs = std::filesystem;

namespace polydoc::retrieval {

static_assert(std::endian::native == std::endian::little, "index files are written in host order");

TokenEmbeddingMatrix::TokenEmbeddingMatrix(size_t rows, size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
    if (rows_ == 0 || dim_ == 0) throw Error(ErrorCode::ShapeError, "embedding matrix must have at least one row and column");
    if (values_.size() != rows_ * dim_)
        throw Error(ErrorCode::ShapeError, "embedding matrix has " + std::to_string(values_.size()) + " values, expected " +
                                               std::to_string(rows_ * dim_));
    for (float v : values_)
        if (!std::isfinite(v)) throw Error(ErrorCode::ShapeError, "embedding matrix contains a non-finite value");
}

double late_interaction_score(const TokenEmbeddingMatrix& query, const TokenEmbeddingMatrix& item) {
    if (query.dim() != item.dim())
        throw Error(ErrorCode::DimensionMismatch,
                    "query dim " + std::to_string(query.dim()) + " vs item dim " + std::to_string(item.dim()));
    const size_t d = query.dim();
    const float* q = query.values().data();
    const float* it = item.values().data();
    double total = 0;
    for (size_t i = 0; i < query.rows(); ++i) {
        double best = -INFINITY;
        for (size_t j = 0; j < item.rows(); ++j) {
            double dot = 0;
            for (size_t c = 0; c < d; ++c) dot += static_cast<double>(q[i * d + c]) * it[j * d + c];
            best = std::max(best, dot);
        }
        total += best;
    }
    return total;
}

std::string to_string(const ItemKey& key) {
    std::string s = key.doc_id + "/p" + std::to_string(key.page_index);
    if (key.segment_index >= 0) s += "/s" + std::to_string(key.segment_index);
    return s;
}

std::vector<ScoredItem> top_k(std::vector<ScoredItem> scores, size_t k) {
    auto better = [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.key < b.key;
    };
    size_t n = std::min(k, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n), scores.end(), better);
    scores.resize(n);
    return scores;
}

std::string_view to_string(Modality m) { return m == Modality::Text ? "text" : "image"; }

// ---------------------------------------------------------------------------
// Binary serialization

namespace {

constexpr char kIndexMagic[4] = {'P', 'D', 'I', 'X'};
constexpr char kMatrixMagic[4] = {'P', 'D', 'M', 'X'};
constexpr uint32_t kIndexVersion = 1;

class Writer {
public:
    template <typename T> void put(T v) { buf_.append(reinterpret_cast<const char*>(&v), sizeof v); }
    void bytes(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void str(const std::string& s) {
        put(static_cast<uint32_t>(s.size()));
        buf_ += s;
    }
    void matrix(const TokenEmbeddingMatrix& m) {
        put(static_cast<uint32_t>(m.rows()));
        bytes(m.values().data(), m.values().size() * sizeof(float));
    }
    std::string& data() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}
    template <typename T> T get() {
        T v;
        need(sizeof v);
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string str() {
        auto n = get<uint32_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    TokenEmbeddingMatrix matrix(size_t dim) {
        auto rows = get<uint32_t>();
        size_t count = static_cast<size_t>(rows) * dim;
        if (dim != 0 && count / dim != rows) fail();
        need(count * sizeof(float));
        std::vector<float> v(count);
        std::memcpy(v.data(), data_.data() + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
        try {
            return TokenEmbeddingMatrix(rows, dim, std::move(v));
        } catch (const Error&) {
            fail();
        }
    }
    void magic(const char (&m)[4]) {
        need(4);
        if (std::memcmp(data_.data() + pos_, m, 4) != 0) fail();
        pos_ += 4;
    }
    bool done() const { return pos_ == data_.size(); }
    [[noreturn]] void fail() const { throw Error(ErrorCode::IndexCorrupt, what_ + " is truncated or malformed"); }

private:
    void need(size_t n) const {
        if (data_.size() - pos_ < n) fail();
    }
    const std::string& data_;
    std::string what_;
    size_t pos_ = 0;
};

std::string cache_key(const std::string& embedder_id, Modality m, const std::string& content) {
    std::string material = embedder_id;
    material += '\0';
    material += to_string(m);
    material += '\0';
    material += content;
    return util::sha256_hex(material);
}

std::optional<TokenEmbeddingMatrix> cache_get(const fs::path& dir, const std::string& key) {
    if (dir.empty()) return std::nullopt;
    fs::path p = dir / (key + ".mat");
    std::error_code ec;
    if (!fs::exists(p, ec)) return std::nullopt;
    try {
        std::string data = util::read_file(p);
        Reader r(data, p.string());
        r.magic(kMatrixMagic);
        auto dim = r.get<uint32_t>();
        auto m = r.matrix(dim);
        if (!r.done()) return std::nullopt;
        return m;
    } catch (const std::exception&) {
        return std::nullopt; // a damaged cache file is a miss, not an error
    }
}

void cache_put(const fs::path& dir, const std::string& key, const TokenEmbeddingMatrix& m) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    Writer w;
    w.bytes(kMatrixMagic, 4);
    w.put(static_cast<uint32_t>(m.dim()));
    w.matrix(m);
    util::write_file_atomic(dir / (key + ".mat"), w.data());
}

struct PendingItem {
    ItemKey key;
    std::string content; // segment text or PNG bytes
};

Index build_index(Modality modality, std::vector<PendingItem> items, EmbeddingClient& embedder,
                  const IndexBuildOptions& opt, IndexBuildStats* stats) {
    EmbedderInfo info;
    try {
        info = embedder.info();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Transport) throw Error(ErrorCode::EmbedderUnreachable, e.what());
        throw;
    }

    std::vector<std::optional<TokenEmbeddingMatrix>> mats(items.size());
    std::vector<std::string> keys(items.size());
    std::vector<size_t> missing;
    for (size_t i = 0; i < items.size(); ++i) {
        keys[i] = cache_key(info.embedder_id, modality, items[i].content);
        mats[i] = cache_get(opt.cache_dir, keys[i]);
        if (!mats[i]) missing.push_back(i);
    }

    const size_t batch = std::max<size_t>(1, opt.batch_size);
    const size_t n_batches = (missing.size() + batch - 1) / batch;
    std::atomic<size_t> next{0};
    std::atomic<size_t> calls{0};
    std::vector<std::exception_ptr> errors(n_batches);
    auto worker = [&] {
        for (size_t b = next++; b < n_batches; b = next++) {
            size_t lo = b * batch, hi = std::min(missing.size(), lo + batch);
            std::vector<std::string> payload;
            for (size_t i = lo; i < hi; ++i) payload.push_back(items[missing[i]].content);
            try {
                ++calls;
                auto out = modality == Modality::Text ? embedder.embed_texts(payload, EmbedKind::Document)
                                                      : embedder.embed_images(payload);
                if (out.size() != payload.size())
                    throw Error(ErrorCode::ShapeError, "embedder returned " + std::to_string(out.size()) +
                                                           " matrices for " + std::to_string(payload.size()) + " inputs");
                for (size_t i = lo; i < hi; ++i) {
                    size_t idx = missing[i];
                    cache_put(opt.cache_dir, keys[idx], out[i - lo]);
                    mats[idx] = std::move(out[i - lo]);
                }
            } catch (const Error& e) {
                errors[b] = e.code() == ErrorCode::Transport
                                ? std::make_exception_ptr(Error(ErrorCode::EmbedderUnreachable, e.what()))
                                : std::current_exception();
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };
    {
        size_t width = std::min(std::max<size_t>(1, opt.max_in_flight), std::max<size_t>(1, n_batches));
        std::vector<std::jthread> pool;
        for (size_t i = 1; i < width; ++i) pool.emplace_back(worker);
        worker();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    Index index;
    index.modality = modality;
    index.embedder_id = info.embedder_id;
    index.dim = info.dim;
    for (size_t i = 0; i < items.size(); ++i) {
        size_t d = mats[i]->dim();
        if (index.dim == 0) index.dim = d;
        if (d != index.dim)
            throw Error(ErrorCode::EmbedderDimDrift, to_string(items[i].key) + " embedded with dim " + std::to_string(d) +
                                                         ", expected " + std::to_string(index.dim));
        index.entries.emplace_back(std::move(items[i].key), std::move(*mats[i]));
    }
    if (stats) {
        stats->items = items.size();
        stats->cache_hits = items.size() - missing.size();
        stats->embed_calls = calls.load();
    }
    return index;
}

} // namespace

void save_index(const Index& index, const fs::path& path) {
    Writer w;
    w.bytes(kIndexMagic, 4);
    w.put(kIndexVersion);
    w.put(static_cast<uint8_t>(index.modality == Modality::Text ? 0 : 1));
    w.str(index.embedder_id);
    w.put(static_cast<uint32_t>(index.dim));
    w.put(static_cast<uint64_t>(index.entries.size()));
    for (const auto& [key, m] : index.entries) {
        w.str(key.doc_id);
        w.put(static_cast<int32_t>(key.page_index));
        w.put(static_cast<int32_t>(key.segment_index));
        w.matrix(m);
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    util::write_file_atomic(path, w.data());
}

Index load_index(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::IndexCorrupt, "index file not found: " + path.string());
    std::string data = util::read_file(path);
    Reader r(data, path.string());
    r.magic(kIndexMagic);
    if (r.get<uint32_t>() != kIndexVersion) throw Error(ErrorCode::IndexCorrupt, path.string() + ": unsupported version");
    Index index;
    auto mod = r.get<uint8_t>();
    if (mod > 1) r.fail();
    index.modality = mod == 0 ? Modality::Text : Modality::Image;
    index.embedder_id = r.str();
    index.dim = r.get<uint32_t>();
    auto count = r.get<uint64_t>();
    if (count > data.size()) r.fail();
    for (uint64_t i = 0; i < count; ++i) {
        ItemKey key;
        key.doc_id = r.str();
        key.page_index = r.get<int32_t>();
        key.segment_index = r.get<int32_t>();
        index.entries.emplace_back(std::move(key), r.matrix(index.dim));
    }
    if (!r.done()) r.fail();
    return index;
}

Index build_text_index(const ingest::Corpus& corpus, EmbeddingClient& embedder, const IndexBuildOptions& options,
                       IndexBuildStats* stats) {
    std::vector<PendingItem> items;
    for (const auto& d : corpus.documents)
        for (const auto& p : d.pages)
            for (const auto& s : p.segments) items.push_back({ItemKey{s.doc_id, s.page_index, s.segment_index}, s.content});
    return build_index(Modality::Text, std::move(items), embedder, options, stats);
}

Index build_image_index(const ingest::Corpus& corpus, EmbeddingClient& embedder, const IndexBuildOptions& options,
                        IndexBuildStats* stats) {
    std::vector<PendingItem> items;
    for (const auto& d : corpus.documents)
        for (const auto& p : d.pages) items.push_back({ItemKey{d.id, p.index, -1}, util::read_file(p.image.file_ref)});
    return build_index(Modality::Image, std::move(items), embedder, options, stats);
}

std::vector<ScoredItem> score_all(const Index& index, const TokenEmbeddingMatrix& query, size_t k, std::string_view doc_id) {
    std::vector<ScoredItem> scores;
    scores.reserve(index.entries.size());
    for (const auto& [key, m] : index.entries) {
        if (!doc_id.empty() && key.doc_id != doc_id) continue;
        scores.push_back({key, late_interaction_score(query, m)});
    }
    return top_k(std::move(scores), k);
}

Retriever::Retriever(const ingest::Corpus& corpus, const Index& text_index, const Index& image_index,
                     EmbeddingClient& text_embedder, EmbeddingClient& image_embedder)
    : corpus_(corpus),
      text_index_(text_index),
      image_index_(image_index),
      text_embedder_(text_embedder),
      image_embedder_(image_embedder) {}

namespace {

bool has_entries(const Index& index, std::string_view doc_id) {
    if (doc_id.empty()) return !index.entries.empty();
    return std::any_of(index.entries.begin(), index.entries.end(), [&](const auto& e) { return e.first.doc_id == doc_id; });
}

TokenEmbeddingMatrix embed_query(EmbeddingClient& embedder, const std::string& question) {
    auto out = embedder.embed_texts({question}, EmbedKind::Query);
    if (out.size() != 1) throw Error(ErrorCode::ShapeError, "expected one query matrix, got " + std::to_string(out.size()));
    return std::move(out[0]);
}

} // namespace

RetrievalResult Retriever::retrieve(const std::string& question, size_t k, std::string_view doc_id) const {
    if (k == 0) throw Error(ErrorCode::ConfigInvalid, "retrieval k must be at least 1");
    RetrievalResult result;
    result.k = k;

    if (has_entries(text_index_, doc_id)) {
        for (const auto& hit : score_all(text_index_, embed_query(text_embedder_, question), k, doc_id)) {
            const auto* seg = corpus_.find_segment(hit.key.doc_id, hit.key.page_index, hit.key.segment_index);
            if (!seg) throw Error(ErrorCode::IndexCorrupt, "text index entry " + to_string(hit.key) + " is not in the corpus");
            result.text_hits.push_back({*seg, hit.score});
        }
    } else {
        result.text_index_empty = true;
        spdlog::warn("text index has no entries{}; continuing with image context only",
                     doc_id.empty() ? std::string() : " for " + std::string(doc_id));
    }

    if (has_entries(image_index_, doc_id)) {
        for (const auto& hit : score_all(image_index_, embed_query(image_embedder_, question), k, doc_id)) {
            const auto* page = corpus_.find_page(hit.key.doc_id, hit.key.page_index);
            if (!page) throw Error(ErrorCode::IndexCorrupt, "image index entry " + to_string(hit.key) + " is not in the corpus");
            result.image_hits.push_back({page->image, hit.score});
        }
    } else {
        result.image_index_empty = true;
        spdlog::warn("image index has no entries{}; continuing with text context only",
                     doc_id.empty() ? std::string() : " for " + std::string(doc_id));
    }
    return result;
}

} // namespace polydoc::retrieval
