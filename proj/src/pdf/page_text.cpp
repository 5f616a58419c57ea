#include "polydoc/pdf/page_text.hpp"

#include <cmath>

#include "content.hpp"

namespace polydoc::pdf {

namespace {

constexpr double kParagraphGap = 1.6; // in font sizes
constexpr double kSameLine = 0.5;
constexpr double kWordGap = 0.2;

class TextCollector : public ContentSink {
public:
    bool wants_graphics() const override { return false; }

    void on_text(const TextEvent& ev) override {
        for (const PlacedGlyph& g : ev.glyphs) add(g);
    }

    std::string finish() {
        // Right-trim every line, collapse runs of blank lines to one.
        std::string out;
        size_t start = 0;
        int blank_run = 0;
        while (start <= text_.size()) {
            size_t nl = text_.find('\n', start);
            std::string line = text_.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
            while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
            if (line.empty()) {
                if (!out.empty() && blank_run == 0) out += '\n';
                ++blank_run;
            } else {
                out += line;
                out += '\n';
                blank_run = 0;
            }
            if (nl == std::string::npos) break;
            start = nl + 1;
        }
        while (!out.empty() && out.back() == '\n') out.pop_back();
        return out;
    }

private:
    void add(const PlacedGlyph& g) {
        if (g.text.empty()) return;
        double size = g.size > 0 ? g.size : 10.0;
        if (!started_) {
            started_ = true;
        } else {
            double ref = std::max(size, line_size_);
            double dy = line_y_ - g.y; // positive when moving down the page
            if (std::abs(dy) > kSameLine * ref) {
                text_ += (dy > kParagraphGap * ref || dy < 0) ? "\n\n" : "\n";
                line_size_ = size;
                line_y_ = g.y;
                last_end_ = g.x;
                last_was_space_ = true;
            } else {
                double gap = g.x - last_end_;
                if (!last_was_space_ && !g.is_space && (gap > kWordGap * ref || gap < -ref)) text_ += ' ';
            }
        }
        if (text_.empty() || text_.back() == '\n') {
            line_y_ = g.y;
            line_size_ = size;
        }
        for (char32_t c : g.text) {
            if (c == U' ' || c == U'\t') c = U' ';
            if (c == U'\r' || c == U'\n') c = U' ';
            append_utf8(text_, c);
        }
        last_end_ = g.x + g.advance;
        last_was_space_ = g.is_space || g.text.back() == U' ';
        line_size_ = std::max(line_size_, size);
    }

    std::string text_;
    bool started_ = false;
    double line_y_ = 0;
    double line_size_ = 0;
    double last_end_ = 0;
    bool last_was_space_ = true;
};

} // namespace

std::string extract_page_text(const Document& doc, size_t page_index) {
    TextCollector collector;
    interpret_page(doc, page_index, collector);
    return collector.finish();
}

} // namespace polydoc::pdf
