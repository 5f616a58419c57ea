#include <gtest/gtest.h>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cmath>

#include "../support/check.hpp"
#include "../support/fixtures.hpp"
#include "../support/generators.hpp"
#include "../support/pdf_writer.hpp"
#include "../support/stubs.hpp"
#include "polydoc/error.hpp"
#include "polydoc/gateway.hpp"
#include "polydoc/ingest.hpp"
#include "polydoc/util.hpp"

using namespace polydoc;
using namespace polydoc::ingest;
using namespace polydoc::testing;
namespace fs = std::filesystem;

namespace {

/// Mean absolute per-channel difference; infinity when sizes differ.
double mean_abs_diff(const RgbImage& a, const RgbImage& b) {
    if (a.width != b.width || a.height != b.height) return INFINITY;
    double sum = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) sum += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
    return sum / static_cast<double>(a.pixels.size());
}

size_t dark_pixels(const RgbImage& img) {
    size_t dark = 0;
    for (size_t i = 0; i < img.pixels.size(); i += 3) dark += img.pixels[i] < 128;
    return dark;
}

} // namespace

TEST(Segment, Examples) {
    EXPECT_EQ(segment_page_text("Hello\n\nWorld"), (std::vector<std::string>{"Hello", "World"}));
    EXPECT_EQ(segment_page_text(""), std::vector<std::string>{});
    EXPECT_EQ(segment_page_text("a\n\n\n\nb\n"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(segment_page_text("  x \n \t \n y\r\n\r\nz"), (std::vector<std::string>{"x", "y", "z"}));
    EXPECT_EQ(segment_page_text("one\ntwo"), (std::vector<std::string>{"one\ntwo"}));
    EXPECT_EQ(segment_page_text("\n \n\t"), std::vector<std::string>{});
}

TEST(SegmentProperty, JoinThenResegmentRoundTrips) {
    gen::Rng rng(41);
    for (int i = 0; i < 500; ++i) {
        std::vector<std::string> paras;
        size_t n = gen::range(rng, 0, 6);
        for (size_t j = 0; j < n; ++j) paras.push_back(gen::paragraph(rng));
        auto segs = segment_page_text([&] {
            std::string s;
            for (size_t j = 0; j < paras.size(); ++j) s += (j ? "\n\n" : "") + paras[j];
            return s;
        }());
        EXPECT_EQ(segs, paras);
        std::string joined;
        for (size_t j = 0; j < segs.size(); ++j) joined += (j ? "\n\n" : "") + segs[j];
        EXPECT_EQ(segment_page_text(joined), segs);
    }
}

class IngestTest : public ::testing::Test {
protected:
    TempDir dir{"ingest"};
};

TEST_F(IngestTest, TwoPageEmbeddedText) {
    write_pdf(dir / "two.pdf", make_text_pdf({"A", "B"}));
    auto pages = extract_text(dir / "two.pdf", nullptr);
    ASSERT_EQ(pages.size(), 2u);
    EXPECT_EQ(pages[0].page_index, 0);
    EXPECT_EQ(pages[0].text, "A");
    EXPECT_EQ(pages[1].page_index, 1);
    EXPECT_EQ(pages[1].text, "B");
    EXPECT_FALSE(pages[0].from_ocr);
}

TEST_F(IngestTest, ParagraphsBecomeSegments) {
    write_pdf(dir / "p.pdf", make_text_pdf({"Revenue grew 12% (year on year).\nCosts were flat.\n\nSecond paragraph."}));
    auto pages = extract_text(dir / "p.pdf", nullptr);
    ASSERT_EQ(pages.size(), 1u);
    EXPECT_EQ(segment_page_text(pages[0].text),
              (std::vector<std::string>{"Revenue grew 12% (year on year).\nCosts were flat.", "Second paragraph."}));
}

TEST_F(IngestTest, UncompressedStreamsToo) {
    PdfPageSpec p;
    p.lines = {"plain stream"};
    write_pdf(dir / "u.pdf", make_pdf({p}, false));
    EXPECT_EQ(extract_text(dir / "u.pdf", nullptr).at(0).text, "plain stream");
}

TEST_F(IngestTest, ZeroPagesAndMissingFile) {
    write_pdf(dir / "zero.pdf", make_pdf({}));
    EXPECT_EQ(code_of([&] { extract_text(dir / "zero.pdf", nullptr); }), ErrorCode::NoPages);
    EXPECT_EQ(code_of([&] { rasterize_pages(dir / "zero.pdf", "z", dir / "out"); }), ErrorCode::NoPages);
    EXPECT_EQ(code_of([&] { extract_text(dir / "nope.pdf", nullptr); }), ErrorCode::MissingSource);
    write_text(dir / "junk.pdf", "this is not a pdf");
    EXPECT_EQ(code_of([&] { extract_text(dir / "junk.pdf", nullptr); }), ErrorCode::UnreadablePdf);
}

TEST_F(IngestTest, OcrFallbackRecoversRasterizedText) {
    // Reference raster of the known string; the fixture page carries only that
    // raster, with no text layer.
    write_pdf(dir / "src.pdf", make_text_pdf({"Total: 42"}));
    auto ref = rasterize_pages(dir / "src.pdf", "ref", dir / "ref", 72);
    RgbImage reference = decode_png(util::read_file(ref[0].file_ref));
    ASSERT_GT(dark_pixels(reference), 60u);

    PdfPageSpec scanned;
    scanned.image = reference;
    write_pdf(dir / "scan.pdf", make_pdf({scanned}));

    SidecarStub sidecar;
    std::atomic<double> seen_diff{INFINITY};
    sidecar.ocr = [&](const std::string& png) -> std::string {
        RgbImage got = decode_png(png);
        double d = mean_abs_diff(got, reference);
        seen_diff = d;
        return d < 2.0 ? "Total: 42" : "";
    };
    gateway::SidecarClient client(sidecar.endpoint());
    auto pages = extract_text(dir / "scan.pdf", &client, 72);
    ASSERT_EQ(pages.size(), 1u);
    EXPECT_TRUE(pages[0].from_ocr);
    EXPECT_EQ(pages[0].text, "Total: 42") << "raster difference " << seen_diff.load();
    EXPECT_EQ(segment_page_text(pages[0].text), std::vector<std::string>{"Total: 42"});
}

TEST_F(IngestTest, ImageOnlyPageWithoutOcrClient) {
    PdfPageSpec scanned;
    scanned.image = RgbImage{2, 2, std::vector<uint8_t>(12, 0)};
    write_pdf(dir / "scan.pdf", make_pdf({scanned}));
    EXPECT_EQ(code_of([&] { extract_text(dir / "scan.pdf", nullptr); }), ErrorCode::OcrUnavailable);
}

TEST_F(IngestTest, RasterizeThreePagesAt144) {
    write_pdf(dir / "three.pdf", make_text_pdf({"one", "two", "three"}));
    auto images = rasterize_pages(dir / "three.pdf", "doc", dir / "out", 144);
    ASSERT_EQ(images.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(images[i].file_ref, dir / "out" / "doc" / ("page_" + std::to_string(i) + ".png"));
        EXPECT_EQ(images[i].render_dpi, 144);
        EXPECT_EQ(images[i].width, 1224);
        EXPECT_EQ(images[i].height, 1584);
        RgbImage img = decode_png(util::read_file(images[i].file_ref));
        EXPECT_EQ(img.width, 1224);
        EXPECT_GT(dark_pixels(img), 0u);
    }
}

TEST_F(IngestTest, RasterizeIsIdempotent) {
    write_pdf(dir / "d.pdf", make_text_pdf({"alpha\n\nbeta", "gamma"}));
    auto a = rasterize_pages(dir / "d.pdf", "d", dir / "a", 50);
    auto b = rasterize_pages(dir / "d.pdf", "d", dir / "a", 50);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(util::read_file(a[i].file_ref), util::read_file(b[i].file_ref));
}

TEST_F(IngestTest, BuildCorpusTwoDocsStableOrder) {
    auto corpus = make_corpus(dir.path(), {{"zeta", {"z1\n\nz2", "z3"}}, {"alpha", {"a1"}}});
    ASSERT_EQ(corpus.documents.size(), 2u);
    EXPECT_EQ(corpus.documents[0].id, "zeta");
    EXPECT_EQ(corpus.documents[1].id, "alpha");
    EXPECT_EQ(corpus.page_count(), 3u);
    EXPECT_EQ(corpus.segment_count(), 4u);
    const auto* s = corpus.find_segment("zeta", 0, 1);
    ASSERT_NE(s, nullptr);
    EXPECT_EQ(s->content, "z2");
    EXPECT_TRUE(fs::exists(dir / "corpus" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "corpus" / "zeta" / "segments.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "corpus" / "zeta" / "page_1.png"));
}

TEST_F(IngestTest, CompletenessImagesPagesPhysicalPages) {
    StaticOcr blank;
    auto corpus = make_corpus(dir.path(), {{"d", {"a", "", "c", "d"}}}, 36, &blank);
    EXPECT_EQ(blank.calls.load(), 1);
    const auto& doc = corpus.documents.at(0);
    ASSERT_EQ(doc.pages.size(), 4u);
    EXPECT_TRUE(doc.pages[1].segments.empty());
    size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(dir / "corpus" / "d")) pngs += e.path().extension() == ".png";
    EXPECT_EQ(pngs, 4u);
}

TEST_F(IngestTest, SegmentsFileSchema) {
    make_corpus(dir.path(), {{"d", {"first\n\nsecond"}}});
    auto rows = util::read_jsonl(dir / "corpus" / "d" / "segments.jsonl");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1], (nlohmann::json{{"doc_id", "d"}, {"page_index", 0}, {"segment_index", 1}, {"content", "second"}}));
}

TEST_F(IngestTest, RepeatedIdAndMissingFile) {
    write_pdf(dir / "a.pdf", make_text_pdf({"x"}));
    write_text(dir / "dup.json", R"([{"doc_id": "a", "pdf_path": "a.pdf"}, {"doc_id": "a", "pdf_path": "a.pdf"}])");
    EXPECT_EQ(code_of([&] { build_corpus(dir / "dup.json", dir / "c1"); }), ErrorCode::DuplicateDocId);

    write_text(dir / "miss.json", R"({"documents": [{"doc_id": "a", "pdf_path": "a.pdf"}, {"doc_id": "ghost", "pdf_path": "gone.pdf"}]})");
    std::string msg;
    EXPECT_EQ(code_of([&] { build_corpus(dir / "miss.json", dir / "c2"); }, &msg), ErrorCode::MissingSource);
    EXPECT_NE(msg.find("ghost"), std::string::npos) << msg;

    write_text(dir / "bad.json", R"([{"doc_id": "../up", "pdf_path": "a.pdf"}])");
    EXPECT_EQ(code_of([&] { build_corpus(dir / "bad.json", dir / "c3"); }), ErrorCode::CorpusInvalid);
    write_text(dir / "shape.json", R"([{"doc": "a"}])");
    EXPECT_EQ(code_of([&] { build_corpus(dir / "shape.json", dir / "c4"); }), ErrorCode::CorpusInvalid);
}

TEST_F(IngestTest, LockHeldByAnotherWriter) {
    fs::path manifest = write_manifest(dir.path(), {{"d", {"x"}}});
    fs::create_directories(dir / "corpus");
    int fd = ::open((dir / "corpus" / ".lock").c_str(), O_RDWR | O_CREAT, 0644);
    ASSERT_GE(fd, 0);
    ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
    EXPECT_EQ(code_of([&] { build_corpus(manifest, dir / "corpus"); }), ErrorCode::CorpusLocked);
    ::flock(fd, LOCK_UN);
    ::close(fd);
    EXPECT_NO_THROW(build_corpus(manifest, dir / "corpus"));
}

TEST_F(IngestTest, LoadMatchesBuildAndIngestIsStable) {
    fs::path manifest = write_manifest(dir.path(), {{"a", {"p0 s0\n\np0 s1", "p1 s0"}}, {"b", {"only"}}});
    IngestOptions opt;
    opt.dpi = 40;
    opt.workers = 2;
    Corpus built = build_corpus(manifest, dir / "one", opt);
    Corpus loaded = load_corpus(dir / "one");
    Corpus again = build_corpus(manifest, dir / "two", opt);
    ASSERT_EQ(loaded.documents.size(), built.documents.size());
    for (size_t d = 0; d < built.documents.size(); ++d) {
        const auto& x = built.documents[d];
        const auto& y = loaded.documents[d];
        const auto& z = again.documents[d];
        EXPECT_EQ(x.id, y.id);
        EXPECT_EQ(x.id, z.id);
        ASSERT_EQ(x.pages.size(), y.pages.size());
        for (size_t p = 0; p < x.pages.size(); ++p) {
            ASSERT_EQ(x.pages[p].segments.size(), y.pages[p].segments.size());
            ASSERT_EQ(x.pages[p].segments.size(), z.pages[p].segments.size());
            for (size_t s = 0; s < x.pages[p].segments.size(); ++s) {
                EXPECT_EQ(x.pages[p].segments[s].content, y.pages[p].segments[s].content);
                EXPECT_EQ(x.pages[p].segments[s].content, z.pages[p].segments[s].content);
            }
            EXPECT_EQ(x.pages[p].image.width, y.pages[p].image.width);
            EXPECT_EQ(x.pages[p].image.height, y.pages[p].image.height);
            EXPECT_EQ(y.pages[p].image.render_dpi, 40);
            EXPECT_EQ(util::read_file(x.pages[p].image.file_ref), util::read_file(z.pages[p].image.file_ref));
        }
    }
}

TEST_F(IngestTest, ReingestReplacesStalePages) {
    write_pdf(dir / "d.pdf", make_text_pdf({"a", "b", "c"}));
    write_text(dir / "m.json", R"([{"doc_id": "d", "pdf_path": "d.pdf"}])");
    build_corpus(dir / "m.json", dir / "corpus", {40, nullptr, 1});
    write_pdf(dir / "d.pdf", make_text_pdf({"a"}));
    Corpus c = build_corpus(dir / "m.json", dir / "corpus", {40, nullptr, 1});
    EXPECT_EQ(c.page_count(), 1u);
    EXPECT_FALSE(fs::exists(dir / "corpus" / "d" / "page_2.png"));
    EXPECT_EQ(load_corpus(dir / "corpus").page_count(), 1u);
}

TEST_F(IngestTest, LoadRejectsDamagedCorpus) {
    make_corpus(dir.path(), {{"d", {"x"}}});
    fs::remove(dir / "corpus" / "d" / "page_0.png");
    EXPECT_EQ(code_of([&] { load_corpus(dir / "corpus"); }), ErrorCode::CorpusInvalid);
    EXPECT_EQ(code_of([&] { load_corpus(dir / "nowhere"); }), ErrorCode::CorpusInvalid);
}
