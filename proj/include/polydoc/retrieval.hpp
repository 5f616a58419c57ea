#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polydoc/ingest.hpp"

namespace polydoc::retrieval {

/// n×d row-major matrix of finite floats, n ≥ 1, d ≥ 1.
class TokenEmbeddingMatrix {
public:
    TokenEmbeddingMatrix() = default;
    /// Throws ShapeError when the shape is empty, `values.size() != rows*dim`,
    /// or any value is not finite.
    TokenEmbeddingMatrix(size_t rows, size_t dim, std::vector<float> values);

    size_t rows() const noexcept { return rows_; }
    size_t dim() const noexcept { return dim_; }
    std::span<const float> row(size_t i) const { return {values_.data() + i * dim_, dim_}; }
    const std::vector<float>& values() const noexcept { return values_; }

    bool operator==(const TokenEmbeddingMatrix&) const = default;

private:
    size_t rows_ = 0;
    size_t dim_ = 0;
    std::vector<float> values_;
};

/// Σ over query rows of the best dot product against any item row.
/// Accumulates in double. Throws DimensionMismatch when dims differ.
double late_interaction_score(const TokenEmbeddingMatrix& query, const TokenEmbeddingMatrix& item);

/// segment_index is -1 for page images.
struct ItemKey {
    std::string doc_id;
    int page_index = 0;
    int segment_index = -1;

    auto operator<=>(const ItemKey&) const = default;
};

std::string to_string(const ItemKey& key);

struct ScoredItem {
    ItemKey key;
    double score = 0;
};

/// The min(k, n) best items by descending score, equal scores by ascending key.
std::vector<ScoredItem> top_k(std::vector<ScoredItem> scores, size_t k);

enum class Modality { Text, Image };

std::string_view to_string(Modality m);

struct Index {
    Modality modality = Modality::Text;
    std::string embedder_id;
    size_t dim = 0;
    std::vector<std::pair<ItemKey, TokenEmbeddingMatrix>> entries;
};

void save_index(const Index& index, const std::filesystem::path& path);
/// Throws IndexCorrupt on malformed files.
Index load_index(const std::filesystem::path& path);

enum class EmbedKind { Query, Document };

struct EmbedderInfo {
    std::string embedder_id;
    size_t dim = 0;
};

/// Token-embedding provider. The HTTP implementation lives in the gateway.
class EmbeddingClient {
public:
    virtual ~EmbeddingClient() = default;
    virtual EmbedderInfo info() = 0;
    virtual std::vector<TokenEmbeddingMatrix> embed_texts(const std::vector<std::string>& texts, EmbedKind kind) = 0;
    virtual std::vector<TokenEmbeddingMatrix> embed_images(const std::vector<std::string>& pngs) = 0;
};

struct IndexBuildOptions {
    std::filesystem::path cache_dir; // empty disables the per-item cache
    size_t batch_size = 8;
    size_t max_in_flight = 4;
};

struct IndexBuildStats {
    size_t items = 0;
    size_t cache_hits = 0;
    size_t embed_calls = 0;
};

/// One entry per text segment, in corpus order.
Index build_text_index(const ingest::Corpus& corpus, EmbeddingClient& embedder, const IndexBuildOptions& options = {},
                       IndexBuildStats* stats = nullptr);
/// One entry per page image, in corpus order.
Index build_image_index(const ingest::Corpus& corpus, EmbeddingClient& embedder, const IndexBuildOptions& options = {},
                        IndexBuildStats* stats = nullptr);

struct TextHit {
    ingest::TextSegment segment;
    double score = 0;
};

struct ImageHit {
    ingest::PageImage image;
    double score = 0;
};

struct RetrievalResult {
    std::vector<TextHit> text_hits;
    std::vector<ImageHit> image_hits;
    size_t k = 0;
    bool text_index_empty = false; // warning flags, not failures
    bool image_index_empty = false;
};

/// Scores every entry of `index` against `query` and selects the top k.
/// When `doc_id` is non-empty only that document's entries compete.
std::vector<ScoredItem> score_all(const Index& index, const TokenEmbeddingMatrix& query, size_t k,
                                  std::string_view doc_id = {});

/// Exact retrieval over both modalities. Each modality embeds the question
/// once with its own embedder, since text and vision retrievers use different
/// query encoders. Built indexes are read-only here and may be shared.
class Retriever {
public:
    Retriever(const ingest::Corpus& corpus, const Index& text_index, const Index& image_index,
              EmbeddingClient& text_embedder, EmbeddingClient& image_embedder);

    RetrievalResult retrieve(const std::string& question, size_t k, std::string_view doc_id = {}) const;

private:
    const ingest::Corpus& corpus_;
    const Index& text_index_;
    const Index& image_index_;
    EmbeddingClient& text_embedder_;
    EmbeddingClient& image_embedder_;
};

} // namespace polydoc::retrieval
