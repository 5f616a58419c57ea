#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "font.hpp"
#include "polydoc/pdf/document.hpp"

namespace polydoc::pdf {

/// Affine matrix [a b c d e f] mapping (x, y) -> (a x + c y + e, b x + d y + f).
struct Matrix {
    double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

    /// this × rhs: apply `this` first, then `rhs`.
    Matrix then(const Matrix& rhs) const {
        return {a * rhs.a + b * rhs.c,       a * rhs.b + b * rhs.d,
                c * rhs.a + d * rhs.c,       c * rhs.b + d * rhs.d,
                e * rhs.a + f * rhs.c + rhs.e, e * rhs.b + f * rhs.d + rhs.f};
    }
    std::array<double, 2> apply(double x, double y) const { return {a * x + c * y + e, b * x + d * y + f}; }
};

struct Rgb {
    double r = 0, g = 0, b = 0;
};

/// One shown glyph, positioned in default user space (after CTM).
struct PlacedGlyph {
    std::u32string text;
    double x = 0, y = 0;   // baseline origin
    double advance = 0;    // horizontal advance in user space
    double size = 0;       // effective font size in user space
    bool is_space = false;
};

struct TextEvent {
    std::vector<PlacedGlyph> glyphs;
    int render_mode = 0;
    Rgb fill;
};

struct PathEvent {
    std::vector<std::vector<std::array<double, 2>>> subpaths; // user space
    std::vector<bool> closed;
    bool fill = false;
    bool stroke = false;
    bool even_odd = false;
    Rgb fill_color;
    Rgb stroke_color;
    double line_width = 1; // user space
};

struct ImageEvent {
    std::shared_ptr<const Stream> stream; // image XObject or synthesized inline image
    Matrix ctm;
    Rgb fill; // paint colour for stencil masks
};

class ContentSink {
public:
    virtual ~ContentSink() = default;
    virtual void on_text(const TextEvent&) {}
    virtual void on_path(const PathEvent&) {}
    virtual void on_image(const ImageEvent&) {}
    /// Return false to skip path/image work entirely (text extraction).
    virtual bool wants_graphics() const { return true; }
};

/// Interprets a page's content streams, emitting text, path and image events.
/// Unknown operators are ignored; malformed operands skip the operator.
void interpret_page(const Document& doc, size_t page_index, ContentSink& sink);

} // namespace polydoc::pdf
