#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "polydoc/pdf/document.hpp"

namespace polydoc::pdf {

/// Byte-code to Unicode mapping parsed from a ToUnicode or encoding CMap.
struct CMap {
    struct Range {
        uint32_t lo = 0, hi = 0;
        int bytes = 1;
    };
    std::vector<Range> codespace;
    std::map<uint32_t, std::u32string> to_unicode;
    struct BfRange {
        uint32_t lo, hi;
        std::u32string base;
    };
    std::vector<BfRange> ranges;

    static CMap parse(std::string_view text);
    bool lookup(uint32_t code, std::u32string& out) const;
};

struct Glyph {
    uint32_t code = 0;
    std::u32string text; // may be empty when unmappable
    double width = 0;    // advance in text space units (already divided by 1000)
    bool is_single_byte_space = false;
};

class Font {
public:
    /// Builds a font from a resource dictionary entry; never throws.
    static Font load(const Document& doc, const Object& font_obj);
    static Font fallback();

    std::vector<Glyph> decode(std::string_view bytes) const;

private:
    enum class Kind { Simple, Composite, Type3 };

    double simple_width(uint32_t code) const;
    double cid_width(uint32_t code) const;
    void decode_simple_code(uint32_t code, Glyph& g) const;

    Kind kind_ = Kind::Simple;
    std::string base_font_;
    // simple fonts
    std::u32string encoding_[256];
    std::vector<double> widths_;
    int64_t first_char_ = 0;
    double missing_width_ = 0;
    bool has_widths_ = false;
    double font_matrix_scale_ = 0.001;
    // composite fonts
    CMap encoding_cmap_;
    bool two_byte_identity_ = true;
    bool ucs2_codes_ = false;
    std::map<uint32_t, double> cid_widths_;
    double default_cid_width_ = 1000;
    // shared
    CMap to_unicode_;
    bool has_to_unicode_ = false;
};

/// Appends UTF-8 for `cp`.
void append_utf8(std::string& out, char32_t cp);
std::string to_utf8(const std::u32string& s);

/// Unicode for an Adobe glyph name ("A", "eacute", "uni20AC", ...); empty if unknown.
std::u32string glyph_name_to_unicode(std::string_view name);

} // namespace polydoc::pdf
