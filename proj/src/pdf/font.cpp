#include "font.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <unordered_map>

#include "lexer.hpp"

namespace polydoc::pdf {

namespace {

// 0x80..0x9F of WinAnsiEncoding; 0 = undefined. 0xA0..0xFF follow Latin-1.
constexpr char16_t kWinAnsiHigh[32] = {
    0x20AC, 0,      0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160,
    0x2039, 0x0152, 0,      0x017D, 0,      0,      0x2018, 0x2019, 0x201C, 0x201D, 0x2022,
    0x2013, 0x2014, 0x02DC, 0x2122, 0x0161, 0x203A, 0x0153, 0,      0x017E, 0x0178};

constexpr char16_t kMacRomanHigh[128] = {
    0x00C4, 0x00C5, 0x00C7, 0x00C9, 0x00D1, 0x00D6, 0x00DC, 0x00E1, 0x00E0, 0x00E2, 0x00E4, 0x00E3,
    0x00E5, 0x00E7, 0x00E9, 0x00E8, 0x00EA, 0x00EB, 0x00ED, 0x00EC, 0x00EE, 0x00EF, 0x00F1, 0x00F3,
    0x00F2, 0x00F4, 0x00F6, 0x00F5, 0x00FA, 0x00F9, 0x00FB, 0x00FC, 0x2020, 0x00B0, 0x00A2, 0x00A3,
    0x00A7, 0x2022, 0x00B6, 0x00DF, 0x00AE, 0x00A9, 0x2122, 0x00B4, 0x00A8, 0x2260, 0x00C6, 0x00D8,
    0x221E, 0x00B1, 0x2264, 0x2265, 0x00A5, 0x00B5, 0x2202, 0x2211, 0x220F, 0x03C0, 0x222B, 0x00AA,
    0x00BA, 0x03A9, 0x00E6, 0x00F8, 0x00BF, 0x00A1, 0x00AC, 0x221A, 0x0192, 0x2248, 0x2206, 0x00AB,
    0x00BB, 0x2026, 0x00A0, 0x00C0, 0x00C3, 0x00D5, 0x0152, 0x0153, 0x2013, 0x2014, 0x201C, 0x201D,
    0x2018, 0x2019, 0x00F7, 0x25CA, 0x00FF, 0x0178, 0x2044, 0x20AC, 0x2039, 0x203A, 0xFB01, 0xFB02,
    0x2021, 0x00B7, 0x201A, 0x201E, 0x2030, 0x00C2, 0x00CA, 0x00C1, 0x00CB, 0x00C8, 0x00CD, 0x00CE,
    0x00CF, 0x00CC, 0x00D3, 0x00D4, 0xF8FF, 0x00D2, 0x00DA, 0x00DB, 0x00D9, 0x0131, 0x02C6, 0x02DC,
    0x00AF, 0x02D8, 0x02D9, 0x02DA, 0x00B8, 0x02DD, 0x02DB, 0x02C7};

struct StdHigh {
    uint8_t code;
    char16_t cp;
};
constexpr StdHigh kStandardHigh[] = {
    {0xA1, 0x00A1}, {0xA2, 0x00A2}, {0xA3, 0x00A3}, {0xA4, 0x2044}, {0xA5, 0x00A5}, {0xA6, 0x0192},
    {0xA7, 0x00A7}, {0xA8, 0x00A4}, {0xA9, 0x0027}, {0xAA, 0x201C}, {0xAB, 0x00AB}, {0xAC, 0x2039},
    {0xAD, 0x203A}, {0xAE, 0xFB01}, {0xAF, 0xFB02}, {0xB1, 0x2013}, {0xB2, 0x2020}, {0xB3, 0x2021},
    {0xB4, 0x00B7}, {0xB6, 0x00B6}, {0xB7, 0x2022}, {0xB8, 0x201A}, {0xB9, 0x201E}, {0xBA, 0x201D},
    {0xBB, 0x00BB}, {0xBC, 0x2026}, {0xBD, 0x2030}, {0xBF, 0x00BF}, {0xC1, 0x0060}, {0xC2, 0x00B4},
    {0xC3, 0x02C6}, {0xC4, 0x02DC}, {0xC5, 0x00AF}, {0xC6, 0x02D8}, {0xC7, 0x02D9}, {0xC8, 0x00A8},
    {0xCA, 0x02DA}, {0xCB, 0x00B8}, {0xCD, 0x02DD}, {0xCE, 0x02DB}, {0xCF, 0x02C7}, {0xD0, 0x2014},
    {0xE1, 0x00C6}, {0xE3, 0x00AA}, {0xE8, 0x0141}, {0xE9, 0x00D8}, {0xEA, 0x0152}, {0xEB, 0x00BA},
    {0xF1, 0x00E6}, {0xF5, 0x0131}, {0xF8, 0x0142}, {0xF9, 0x00F8}, {0xFA, 0x0153}, {0xFB, 0x00DF}};

// Helvetica advance widths for 0x20..0x7E (AFM units).
constexpr short kHelveticaWidths[95] = {
    278, 278, 355, 556, 556, 889, 667, 191, 333, 333, 389, 584, 278, 333, 278, 278, 556, 556, 556,
    556, 556, 556, 556, 556, 556, 556, 278, 278, 584, 584, 584, 556, 1015, 667, 667, 722, 722, 667,
    611, 778, 722, 278, 500, 667, 556, 833, 722, 778, 667, 778, 722, 667, 611, 722, 667, 944, 667,
    667, 611, 278, 278, 278, 469, 556, 333, 556, 556, 500, 556, 556, 278, 556, 556, 222, 222, 500,
    222, 833, 556, 556, 556, 556, 333, 500, 278, 556, 500, 722, 500, 500, 500, 334, 260, 334, 584};

const std::unordered_map<std::string_view, char32_t>& glyph_names() {
    static const std::unordered_map<std::string_view, char32_t> kNames = {
        {"space", 0x20}, {"exclam", 0x21}, {"quotedbl", 0x22}, {"numbersign", 0x23},
        {"dollar", 0x24}, {"percent", 0x25}, {"ampersand", 0x26}, {"quotesingle", 0x27},
        {"quoteright", 0x2019}, {"parenleft", 0x28}, {"parenright", 0x29}, {"asterisk", 0x2A},
        {"plus", 0x2B}, {"comma", 0x2C}, {"hyphen", 0x2D}, {"period", 0x2E}, {"slash", 0x2F},
        {"zero", 0x30}, {"one", 0x31}, {"two", 0x32}, {"three", 0x33}, {"four", 0x34},
        {"five", 0x35}, {"six", 0x36}, {"seven", 0x37}, {"eight", 0x38}, {"nine", 0x39},
        {"colon", 0x3A}, {"semicolon", 0x3B}, {"less", 0x3C}, {"equal", 0x3D}, {"greater", 0x3E},
        {"question", 0x3F}, {"at", 0x40}, {"bracketleft", 0x5B}, {"backslash", 0x5C},
        {"bracketright", 0x5D}, {"asciicircum", 0x5E}, {"underscore", 0x5F}, {"grave", 0x60},
        {"quoteleft", 0x2018}, {"braceleft", 0x7B}, {"bar", 0x7C}, {"braceright", 0x7D},
        {"asciitilde", 0x7E}, {"bullet", 0x2022}, {"endash", 0x2013}, {"emdash", 0x2014},
        {"quotedblleft", 0x201C}, {"quotedblright", 0x201D}, {"quotesinglbase", 0x201A},
        {"quotedblbase", 0x201E}, {"ellipsis", 0x2026}, {"dagger", 0x2020},
        {"daggerdbl", 0x2021}, {"trademark", 0x2122}, {"copyright", 0xA9}, {"registered", 0xAE},
        {"degree", 0xB0}, {"section", 0xA7}, {"paragraph", 0xB6}, {"periodcentered", 0xB7},
        {"minus", 0x2212}, {"multiply", 0xD7}, {"divide", 0xF7}, {"plusminus", 0xB1},
        {"fi", 0xFB01}, {"fl", 0xFB02}, {"ff", 0xFB00}, {"ffi", 0xFB03}, {"ffl", 0xFB04},
        {"Euro", 0x20AC}, {"sterling", 0xA3}, {"yen", 0xA5}, {"cent", 0xA2}, {"currency", 0xA4},
        {"florin", 0x192}, {"perthousand", 0x2030}, {"guillemotleft", 0xAB},
        {"guillemotright", 0xBB}, {"guilsinglleft", 0x2039}, {"guilsinglright", 0x203A},
        {"exclamdown", 0xA1}, {"questiondown", 0xBF}, {"nbspace", 0xA0}, {"sfthyphen", 0xAD},
        {"logicalnot", 0xAC}, {"mu", 0xB5}, {"onehalf", 0xBD}, {"onequarter", 0xBC},
        {"threequarters", 0xBE}, {"twosuperior", 0xB2}, {"threesuperior", 0xB3},
        {"onesuperior", 0xB9}, {"ordfeminine", 0xAA}, {"ordmasculine", 0xBA}, {"germandbls", 0xDF},
        {"AE", 0xC6}, {"ae", 0xE6}, {"OE", 0x152}, {"oe", 0x153}, {"Oslash", 0xD8},
        {"oslash", 0xF8}, {"Lslash", 0x141}, {"lslash", 0x142}, {"dotlessi", 0x131},
        {"Eth", 0xD0}, {"eth", 0xF0}, {"Thorn", 0xDE}, {"thorn", 0xFE}, {"fraction", 0x2044},
        {"circumflex", 0x2C6}, {"tilde", 0x2DC}, {"macron", 0xAF}, {"breve", 0x2D8},
        {"dotaccent", 0x2D9}, {"dieresis", 0xA8}, {"ring", 0x2DA}, {"cedilla", 0xB8},
        {"hungarumlaut", 0x2DD}, {"ogonek", 0x2DB}, {"caron", 0x2C7}, {"acute", 0xB4},
        {"brokenbar", 0xA6}, {"lozenge", 0x25CA}, {"infinity", 0x221E}, {"notequal", 0x2260},
        {"lessequal", 0x2264}, {"greaterequal", 0x2265}, {"summation", 0x2211},
        {"product", 0x220F}, {"integral", 0x222B}, {"radical", 0x221A}, {"approxequal", 0x2248},
        {"partialdiff", 0x2202}, {"Delta", 0x2206}, {"Omega", 0x2126}, {"pi", 0x3C0},
        {"alpha", 0x3B1}, {"beta", 0x3B2}, {"gamma", 0x3B3}, {"delta", 0x3B4},
        {"epsilon", 0x3B5}, {"lambda", 0x3BB}, {"sigma", 0x3C3}, {"theta", 0x3B8},
        {"arrowright", 0x2192}, {"arrowleft", 0x2190}, {"arrowup", 0x2191}, {"arrowdown", 0x2193},
    };
    return kNames;
}

// Composes "<base><accent>" glyph names, e.g. "eacute" -> U+00E9.
char32_t compose_accented(std::string_view name) {
    struct Accent {
        std::string_view suffix;
        std::string_view bases;       // base letters in order
        std::u32string_view results;  // composed code points, parallel to bases
    };
    static const Accent kAccents[] = {
        {"acute", "AEIOUYaeiouy", U"ÁÉÍÓÚÝáéíóúý"},
        {"grave", "AEIOUaeiou", U"ÀÈÌÒÙàèìòù"},
        {"circumflex", "AEIOUaeiou", U"ÂÊÎÔÛâêîôû"},
        {"dieresis", "AEIOUYaeiouy", U"ÄËÏÖÜŸäëïöüÿ"},
        {"tilde", "ANOano", U"ÃÑÕãñõ"},
        {"ring", "Aa", U"Åå"},
        {"cedilla", "Cc", U"Çç"},
        {"caron", "SZszCcEeRrNn", U"ŠŽšžČčĚěŘřŇň"},
    };
    for (const auto& a : kAccents) {
        if (name.size() == a.suffix.size() + 1 && name.substr(1) == a.suffix) {
            auto pos = a.bases.find(name[0]);
            if (pos != std::string_view::npos) return a.results[pos];
        }
    }
    return 0;
}

uint32_t bytes_to_code(std::string_view s) {
    uint32_t v = 0;
    for (unsigned char c : s) v = (v << 8) | c;
    return v;
}

std::u32string utf16be_to_u32(std::string_view s) {
    std::u32string out;
    for (size_t i = 0; i + 1 < s.size(); i += 2) {
        char32_t u = (static_cast<unsigned char>(s[i]) << 8) | static_cast<unsigned char>(s[i + 1]);
        if (u >= 0xD800 && u < 0xDC00 && i + 3 < s.size()) {
            char32_t lo = (static_cast<unsigned char>(s[i + 2]) << 8) | static_cast<unsigned char>(s[i + 3]);
            if (lo >= 0xDC00 && lo < 0xE000) {
                out.push_back(0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00));
                i += 2;
                continue;
            }
        }
        out.push_back(u);
    }
    if (s.size() == 1) out.push_back(static_cast<unsigned char>(s[0]));
    return out;
}

void set_base_encoding(std::u32string (&enc)[256], std::string_view name) {
    for (int c = 0; c < 256; ++c) enc[c].clear();
    for (int c = 0x20; c < 0x7F; ++c) enc[c] = std::u32string(1, static_cast<char32_t>(c));
    if (name == "MacRomanEncoding") {
        for (int c = 0; c < 128; ++c) enc[0x80 + c] = std::u32string(1, kMacRomanHigh[c]);
    } else if (name == "StandardEncoding") {
        enc[0x27] = U"’";
        enc[0x60] = U"‘";
        for (const auto& e : kStandardHigh) enc[e.code] = std::u32string(1, e.cp);
    } else {
        // WinAnsi (also the default for unknown/absent encodings).
        for (int c = 0; c < 32; ++c) {
            if (kWinAnsiHigh[c]) enc[0x80 + c] = std::u32string(1, kWinAnsiHigh[c]);
        }
        for (int c = 0xA0; c < 0x100; ++c) enc[c] = std::u32string(1, static_cast<char32_t>(c));
        enc[0x7F] = U"•";
    }
}

} // namespace

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        if (cp >= 0xD800 && cp < 0xE000) cp = 0xFFFD;
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x110000) {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string to_utf8(const std::u32string& s) {
    std::string out;
    for (char32_t c : s) append_utf8(out, c);
    return out;
}

std::u32string glyph_name_to_unicode(std::string_view name) {
    if (name.empty()) return {};
    // "a.sc", "f_i" style suffixes/ligatures
    if (auto dot = name.find('.'); dot != std::string_view::npos && dot > 0) name = name.substr(0, dot);
    if (name.size() == 1 && std::isalpha(static_cast<unsigned char>(name[0]))) {
        return std::u32string(1, static_cast<char32_t>(name[0]));
    }
    const auto& names = glyph_names();
    if (auto it = names.find(name); it != names.end()) return std::u32string(1, it->second);
    if (char32_t c = compose_accented(name)) return std::u32string(1, c);
    auto parse_hex = [](std::string_view h) -> char32_t {
        if (h.empty() || h.size() > 6) return 0;
        char32_t v = 0;
        for (char c : h) {
            if (!std::isxdigit(static_cast<unsigned char>(c))) return 0;
            v = v * 16 + static_cast<char32_t>(std::isdigit(static_cast<unsigned char>(c)) ? c - '0' : (std::tolower(c) - 'a' + 10));
        }
        return v;
    };
    if (name.substr(0, 3) == "uni" && name.size() >= 7 && (name.size() - 3) % 4 == 0) {
        std::u32string out;
        for (size_t i = 3; i + 4 <= name.size(); i += 4) {
            char32_t v = parse_hex(name.substr(i, 4));
            if (!v) return {};
            out.push_back(v);
        }
        return out;
    }
    if (name[0] == 'u' && name.size() >= 5 && name.size() <= 7) {
        if (char32_t v = parse_hex(name.substr(1))) return std::u32string(1, v);
    }
    if (name.find('_') != std::string_view::npos) {
        std::u32string out;
        size_t start = 0;
        while (start <= name.size()) {
            size_t us = name.find('_', start);
            auto part = name.substr(start, us == std::string_view::npos ? std::string_view::npos : us - start);
            out += glyph_name_to_unicode(part);
            if (us == std::string_view::npos) break;
            start = us + 1;
        }
        return out;
    }
    return {};
}

CMap CMap::parse(std::string_view text) {
    CMap cm;
    Lexer lx(text);
    std::vector<Token> operands;
    auto code_of = [](const Token& t) { return bytes_to_code(t.text); };
    for (;;) {
        Token t = lx.next();
        if (t.kind == Token::Kind::Eof) break;
        if (t.is_keyword("begincodespacerange")) {
            for (;;) {
                Token a = lx.next();
                if (a.kind != Token::Kind::String) break;
                Token b = lx.next();
                if (b.kind != Token::Kind::String) break;
                cm.codespace.push_back({code_of(a), code_of(b), static_cast<int>(std::max<size_t>(1, a.text.size()))});
            }
        } else if (t.is_keyword("beginbfchar")) {
            for (;;) {
                Token src = lx.next();
                if (src.kind != Token::Kind::String) break;
                Token dst = lx.next();
                if (dst.kind == Token::Kind::String) {
                    cm.to_unicode[code_of(src)] = utf16be_to_u32(dst.text);
                } else if (dst.kind == Token::Kind::Name) {
                    cm.to_unicode[code_of(src)] = glyph_name_to_unicode(dst.text);
                } else {
                    break;
                }
            }
        } else if (t.is_keyword("beginbfrange")) {
            for (;;) {
                Token lo = lx.next();
                if (lo.kind != Token::Kind::String) break;
                Token hi = lx.next();
                if (hi.kind != Token::Kind::String) break;
                Token dst = lx.next();
                uint32_t l = code_of(lo), h = code_of(hi);
                if (h < l || h - l > 0xFFFF) h = l;
                if (dst.kind == Token::Kind::String) {
                    cm.ranges.push_back({l, h, utf16be_to_u32(dst.text)});
                } else if (dst.kind == Token::Kind::ArrayOpen) {
                    uint32_t code = l;
                    for (;;) {
                        Token e = lx.next();
                        if (e.kind != Token::Kind::String) break;
                        if (code <= h) cm.to_unicode[code] = utf16be_to_u32(e.text);
                        ++code;
                    }
                } else {
                    break;
                }
            }
        } else if (t.is_keyword("begincidrange") || t.is_keyword("begincidchar")) {
            // CID mappings do not carry Unicode; skip their bodies.
            std::string end = t.text == "begincidrange" ? "endcidrange" : "endcidchar";
            for (;;) {
                Token e = lx.next();
                if (e.kind == Token::Kind::Eof || e.is_keyword(end)) break;
            }
        }
    }
    std::sort(cm.codespace.begin(), cm.codespace.end(),
              [](const Range& a, const Range& b) { return a.bytes < b.bytes; });
    return cm;
}

bool CMap::lookup(uint32_t code, std::u32string& out) const {
    if (auto it = to_unicode.find(code); it != to_unicode.end()) {
        out = it->second;
        return true;
    }
    for (const auto& r : ranges) {
        if (code >= r.lo && code <= r.hi && !r.base.empty()) {
            out = r.base;
            out.back() += static_cast<char32_t>(code - r.lo);
            return true;
        }
    }
    return false;
}

Font Font::fallback() {
    Font f;
    set_base_encoding(f.encoding_, "WinAnsiEncoding");
    return f;
}

Font Font::load(const Document& doc, const Object& font_obj) {
    Font f = fallback();
    Object fo = doc.resolve(font_obj);
    if (!fo.is_dict()) return f;
    const Dict& fd = fo.as_dict();
    Object subtype = doc.lookup(fd, "Subtype");
    Object base = doc.lookup(fd, "BaseFont");
    if (base.is_name()) f.base_font_ = base.as_name();

    Object tu = doc.lookup(fd, "ToUnicode");
    if (tu.is_stream()) {
        try {
            f.to_unicode_ = CMap::parse(doc.decode(tu.as_stream()));
            f.has_to_unicode_ = true;
        } catch (const std::exception&) {
        }
    }

    if (subtype.is_name("Type0")) {
        f.kind_ = Kind::Composite;
        Object enc = doc.lookup(fd, "Encoding");
        if (enc.is_name()) {
            const std::string& n = enc.as_name();
            f.ucs2_codes_ = n.find("UCS2") != std::string::npos || n.find("UTF16") != std::string::npos;
        } else if (enc.is_stream()) {
            try {
                f.encoding_cmap_ = CMap::parse(doc.decode(enc.as_stream()));
                f.two_byte_identity_ = f.encoding_cmap_.codespace.empty();
            } catch (const std::exception&) {
            }
        }
        Object desc = doc.lookup(fd, "DescendantFonts");
        if (desc.is_array() && !desc.as_array().empty()) {
            Object cid = doc.resolve(desc.as_array()[0]);
            if (cid.is_dict()) {
                Object dw = doc.lookup(cid.as_dict(), "DW");
                if (dw.is_number()) f.default_cid_width_ = dw.as_number();
                Object w = doc.lookup(cid.as_dict(), "W");
                if (w.is_array()) {
                    const auto& arr = w.as_array();
                    for (size_t i = 0; i < arr.size();) {
                        Object first = doc.resolve(arr[i]);
                        if (!first.is_number() || i + 1 >= arr.size()) break;
                        Object second = doc.resolve(arr[i + 1]);
                        if (second.is_array()) {
                            auto c = static_cast<uint32_t>(first.as_int());
                            for (const Object& wv : second.as_array()) {
                                Object r = doc.resolve(wv);
                                if (r.is_number()) f.cid_widths_[c] = r.as_number();
                                ++c;
                            }
                            i += 2;
                        } else if (i + 2 < arr.size()) {
                            Object wv = doc.resolve(arr[i + 2]);
                            auto lo = first.as_int(), hi = second.as_number() > 0 ? second.as_int() : lo;
                            if (wv.is_number() && hi - lo < 65536) {
                                for (auto c = lo; c <= hi; ++c) f.cid_widths_[static_cast<uint32_t>(c)] = wv.as_number();
                            }
                            i += 3;
                        } else {
                            break;
                        }
                    }
                }
            }
        }
        return f;
    }

    if (subtype.is_name("Type3")) {
        f.kind_ = Kind::Type3;
        Object fm = doc.lookup(fd, "FontMatrix");
        if (fm.is_array() && !fm.as_array().empty() && fm.as_array()[0].is_number()) {
            f.font_matrix_scale_ = fm.as_array()[0].as_number();
        }
    }

    Object enc = doc.lookup(fd, "Encoding");
    if (enc.is_name()) {
        set_base_encoding(f.encoding_, enc.as_name());
    } else if (enc.is_dict()) {
        Object be = doc.lookup(enc.as_dict(), "BaseEncoding");
        bool symbolic_std = f.base_font_.find("Symbol") != std::string::npos ||
                            f.base_font_.find("Dingbats") != std::string::npos;
        set_base_encoding(f.encoding_, be.is_name() ? be.as_name()
                                                    : (symbolic_std ? "WinAnsiEncoding" : "StandardEncoding"));
        Object diffs = doc.lookup(enc.as_dict(), "Differences");
        if (diffs.is_array()) {
            int64_t code = 0;
            for (const Object& d : diffs.as_array()) {
                Object r = doc.resolve(d);
                if (r.is_number()) {
                    code = r.as_int();
                } else if (r.is_name()) {
                    if (code >= 0 && code < 256) f.encoding_[code] = glyph_name_to_unicode(r.as_name());
                    ++code;
                }
            }
        }
    }

    Object fc = doc.lookup(fd, "FirstChar");
    Object widths = doc.lookup(fd, "Widths");
    if (fc.is_number() && widths.is_array()) {
        f.first_char_ = fc.as_int();
        for (const Object& w : widths.as_array()) {
            Object r = doc.resolve(w);
            f.widths_.push_back(r.is_number() ? r.as_number() : 0.0);
        }
        f.has_widths_ = true;
    }
    Object desc = doc.lookup(fd, "FontDescriptor");
    if (desc.is_dict()) {
        Object mw = doc.lookup(desc.as_dict(), "MissingWidth");
        if (mw.is_number()) f.missing_width_ = mw.as_number();
    }
    return f;
}

double Font::simple_width(uint32_t code) const {
    if (has_widths_) {
        int64_t i = static_cast<int64_t>(code) - first_char_;
        if (i >= 0 && i < static_cast<int64_t>(widths_.size())) return widths_[static_cast<size_t>(i)] * font_matrix_scale_;
        return missing_width_ * font_matrix_scale_;
    }
    if (kind_ == Kind::Type3) return 0;
    if (base_font_.find("Courier") != std::string::npos) return 0.6;
    if (code >= 0x20 && code <= 0x7E) return kHelveticaWidths[code - 0x20] / 1000.0;
    return 0.556;
}

double Font::cid_width(uint32_t code) const {
    if (auto it = cid_widths_.find(code); it != cid_widths_.end()) return it->second / 1000.0;
    return default_cid_width_ / 1000.0;
}

void Font::decode_simple_code(uint32_t code, Glyph& g) const {
    g.code = code;
    g.width = simple_width(code);
    g.is_single_byte_space = code == 32;
    if (has_to_unicode_ && to_unicode_.lookup(code, g.text)) return;
    g.text = encoding_[code & 0xFF];
}

std::vector<Glyph> Font::decode(std::string_view bytes) const {
    std::vector<Glyph> out;
    if (kind_ != Kind::Composite) {
        out.reserve(bytes.size());
        for (unsigned char c : bytes) {
            Glyph g;
            decode_simple_code(c, g);
            out.push_back(std::move(g));
        }
        return out;
    }

    size_t i = 0;
    while (i < bytes.size()) {
        int len = 2;
        if (!two_byte_identity_) {
            len = 0;
            for (const auto& r : encoding_cmap_.codespace) {
                if (i + static_cast<size_t>(r.bytes) > bytes.size()) continue;
                uint32_t c = bytes_to_code(bytes.substr(i, static_cast<size_t>(r.bytes)));
                if (c >= r.lo && c <= r.hi) {
                    len = r.bytes;
                    break;
                }
            }
            if (len == 0) len = 1;
        }
        if (i + static_cast<size_t>(len) > bytes.size()) len = static_cast<int>(bytes.size() - i);
        std::string_view chunk = bytes.substr(i, static_cast<size_t>(len));
        i += static_cast<size_t>(len);
        Glyph g;
        g.code = bytes_to_code(chunk);
        g.width = cid_width(g.code);
        g.is_single_byte_space = len == 1 && g.code == 32;
        if (has_to_unicode_ && to_unicode_.lookup(g.code, g.text)) {
        } else if (ucs2_codes_) {
            g.text = utf16be_to_u32(chunk);
        }
        out.push_back(std::move(g));
    }
    return out;
}

} // namespace polydoc::pdf
