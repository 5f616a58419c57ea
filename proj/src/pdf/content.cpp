#include "content.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "lexer.hpp"

namespace polydoc::pdf {

namespace {

constexpr int kMaxFormDepth = 12;

struct GState {
    Matrix ctm;
    Rgb fill;
    Rgb stroke;
    double line_width = 1;
    // text state
    const Font* font = nullptr;
    double font_size = 0;
    double char_spacing = 0;
    double word_spacing = 0;
    double h_scale = 1;
    double leading = 0;
    double rise = 0;
    int render_mode = 0;
};

Rgb from_components(const std::vector<double>& c) {
    auto clamp = [](double v) { return std::clamp(v, 0.0, 1.0); };
    if (c.size() == 1) return {clamp(c[0]), clamp(c[0]), clamp(c[0])};
    if (c.size() == 3) return {clamp(c[0]), clamp(c[1]), clamp(c[2])};
    if (c.size() == 4) {
        double k = clamp(c[3]);
        return {(1 - clamp(c[0])) * (1 - k), (1 - clamp(c[1])) * (1 - k), (1 - clamp(c[2])) * (1 - k)};
    }
    return {};
}

std::string expand_inline_key(const std::string& k) {
    static const std::map<std::string, std::string> kKeys = {
        {"W", "Width"},         {"H", "Height"},     {"BPC", "BitsPerComponent"},
        {"CS", "ColorSpace"},   {"F", "Filter"},     {"DP", "DecodeParms"},
        {"IM", "ImageMask"},    {"D", "Decode"},     {"I", "Interpolate"},
        {"L", "Length"}};
    auto it = kKeys.find(k);
    return it == kKeys.end() ? k : it->second;
}

Object expand_inline_value(const Object& v) {
    static const std::map<std::string, std::string> kNames = {
        {"G", "DeviceGray"}, {"RGB", "DeviceRGB"}, {"CMYK", "DeviceCMYK"}, {"I", "Indexed"}};
    if (v.is_name()) {
        auto it = kNames.find(v.as_name());
        if (it != kNames.end()) return Name{it->second};
    }
    return v;
}

class Interpreter {
public:
    Interpreter(const Document& doc, ContentSink& sink) : doc_(doc), sink_(sink) {}

    void run(std::string_view content, const Dict& resources, GState gs, int depth) {
        Lexer lx(content);
        std::vector<Object> operands;
        std::vector<GState> stack;
        std::map<std::string, Font> fonts;
        std::vector<std::vector<std::array<double, 2>>> subpaths;
        std::vector<bool> closed;
        std::array<double, 2> current{0, 0};
        Matrix tm, tlm;

        auto num = [&](size_t i) -> std::optional<double> {
            if (i >= operands.size() || !operands[i].is_number()) return std::nullopt;
            return operands[i].as_number();
        };
        auto nums = [&]() {
            std::vector<double> v;
            for (const auto& o : operands) {
                if (o.is_number()) v.push_back(o.as_number());
            }
            return v;
        };
        auto user = [&](double x, double y) { return gs.ctm.apply(x, y); };
        auto move_to = [&](double x, double y) {
            current = {x, y};
            subpaths.push_back({user(x, y)});
            closed.push_back(false);
        };
        auto line_to = [&](double x, double y) {
            if (subpaths.empty()) move_to(x, y);
            current = {x, y};
            subpaths.back().push_back(user(x, y));
        };
        auto curve_to = [&](double x1, double y1, double x2, double y2, double x3, double y3) {
            if (subpaths.empty()) move_to(current[0], current[1]);
            auto [x0, y0] = current;
            constexpr int kSteps = 16;
            for (int s = 1; s <= kSteps; ++s) {
                double t = static_cast<double>(s) / kSteps, u = 1 - t;
                double x = u * u * u * x0 + 3 * u * u * t * x1 + 3 * u * t * t * x2 + t * t * t * x3;
                double y = u * u * u * y0 + 3 * u * u * t * y1 + 3 * u * t * t * y2 + t * t * t * y3;
                subpaths.back().push_back(user(x, y));
            }
            current = {x3, y3};
        };
        auto paint = [&](bool fill, bool stroke, bool even_odd, bool close) {
            if (close && !closed.empty()) closed.back() = true;
            if ((fill || stroke) && sink_.wants_graphics() && !subpaths.empty()) {
                PathEvent ev;
                ev.subpaths = std::move(subpaths);
                ev.closed = std::move(closed);
                ev.fill = fill;
                ev.stroke = stroke;
                ev.even_odd = even_odd;
                ev.fill_color = gs.fill;
                ev.stroke_color = gs.stroke;
                double scale = std::sqrt(std::abs(gs.ctm.a * gs.ctm.d - gs.ctm.b * gs.ctm.c));
                ev.line_width = std::max(gs.line_width, 0.0) * scale;
                sink_.on_path(ev);
            }
            subpaths.clear();
            closed.clear();
        };
        auto font_for = [&](const std::string& name) -> const Font* {
            auto it = fonts.find(name);
            if (it != fonts.end()) return &it->second;
            Object font_res = doc_.lookup(resources, "Font");
            Object fo = font_res.is_dict() ? doc_.lookup(font_res.as_dict(), name) : Object{};
            return &fonts.emplace(name, fo.is_null() ? Font::fallback() : Font::load(doc_, fo)).first->second;
        };
        auto show = [&](const std::string& bytes) {
            static const Font kFallback = Font::fallback();
            const Font& font = gs.font ? *gs.font : kFallback;
            TextEvent ev;
            ev.render_mode = gs.render_mode;
            ev.fill = gs.fill;
            for (Glyph& g : font.decode(bytes)) {
                Matrix trm = Matrix{gs.font_size * gs.h_scale, 0, 0, gs.font_size, 0, gs.rise}.then(tm).then(gs.ctm);
                Matrix m = tm.then(gs.ctm);
                PlacedGlyph pg;
                pg.x = trm.e;
                pg.y = trm.f;
                pg.size = std::abs(gs.font_size) * std::hypot(m.c, m.d);
                double tx = (g.width * gs.font_size + gs.char_spacing +
                             (g.is_single_byte_space ? gs.word_spacing : 0)) * gs.h_scale;
                pg.advance = tx * std::hypot(m.a, m.b);
                pg.is_space = g.is_single_byte_space || g.text == U" ";
                pg.text = std::move(g.text);
                ev.glyphs.push_back(std::move(pg));
                tm = Matrix{1, 0, 0, 1, tx, 0}.then(tm);
            }
            if (!ev.glyphs.empty()) sink_.on_text(ev);
        };
        auto next_line = [&](double tx, double ty) {
            tlm = Matrix{1, 0, 0, 1, tx, ty}.then(tlm);
            tm = tlm;
        };

        for (;;) {
            Token t = lx.next();
            using K = Token::Kind;
            if (t.kind == K::Eof) break;
            if (t.kind != K::Keyword) {
                if (auto o = operand(lx, std::move(t))) operands.push_back(std::move(*o));
                continue;
            }
            const std::string& op = t.text;

            if (op == "BI") {
                inline_image(lx, gs);
                operands.clear();
                continue;
            }

            // graphics state
            if (op == "q") {
                stack.push_back(gs);
            } else if (op == "Q") {
                if (!stack.empty()) {
                    gs = stack.back();
                    stack.pop_back();
                }
            } else if (op == "cm") {
                auto v = nums();
                if (v.size() == 6) gs.ctm = Matrix{v[0], v[1], v[2], v[3], v[4], v[5]}.then(gs.ctm);
            } else if (op == "w") {
                if (auto v = num(0)) gs.line_width = *v;
            }
            // colour
            else if (op == "g" || op == "rg" || op == "k" || op == "sc" || op == "scn") {
                auto v = nums();
                if (!v.empty()) gs.fill = from_components(v);
            } else if (op == "G" || op == "RG" || op == "K" || op == "SC" || op == "SCN") {
                auto v = nums();
                if (!v.empty()) gs.stroke = from_components(v);
            } else if (op == "cs") {
                gs.fill = {};
            } else if (op == "CS") {
                gs.stroke = {};
            }
            // paths
            else if (op == "m") {
                if (auto x = num(0), y = num(1); x && y) move_to(*x, *y);
            } else if (op == "l") {
                if (auto x = num(0), y = num(1); x && y) line_to(*x, *y);
            } else if (op == "c") {
                auto v = nums();
                if (v.size() == 6) curve_to(v[0], v[1], v[2], v[3], v[4], v[5]);
            } else if (op == "v") {
                auto v = nums();
                if (v.size() == 4) curve_to(current[0], current[1], v[0], v[1], v[2], v[3]);
            } else if (op == "y") {
                auto v = nums();
                if (v.size() == 4) curve_to(v[0], v[1], v[2], v[3], v[2], v[3]);
            } else if (op == "h") {
                if (!closed.empty()) closed.back() = true;
            } else if (op == "re") {
                auto v = nums();
                if (v.size() == 4) {
                    move_to(v[0], v[1]);
                    line_to(v[0] + v[2], v[1]);
                    line_to(v[0] + v[2], v[1] + v[3]);
                    line_to(v[0], v[1] + v[3]);
                    closed.back() = true;
                    current = {v[0], v[1]};
                }
            } else if (op == "S") {
                paint(false, true, false, false);
            } else if (op == "s") {
                paint(false, true, false, true);
            } else if (op == "f" || op == "F") {
                paint(true, false, false, true);
            } else if (op == "f*") {
                paint(true, false, true, true);
            } else if (op == "B") {
                paint(true, true, false, false);
            } else if (op == "B*") {
                paint(true, true, true, false);
            } else if (op == "b") {
                paint(true, true, false, true);
            } else if (op == "b*") {
                paint(true, true, true, true);
            } else if (op == "n") {
                paint(false, false, false, false);
            }
            // text
            else if (op == "BT") {
                tm = Matrix{};
                tlm = Matrix{};
            } else if (op == "ET") {
            } else if (op == "Tc") {
                if (auto v = num(0)) gs.char_spacing = *v;
            } else if (op == "Tw") {
                if (auto v = num(0)) gs.word_spacing = *v;
            } else if (op == "Tz") {
                if (auto v = num(0)) gs.h_scale = *v / 100.0;
            } else if (op == "TL") {
                if (auto v = num(0)) gs.leading = *v;
            } else if (op == "Ts") {
                if (auto v = num(0)) gs.rise = *v;
            } else if (op == "Tr") {
                if (auto v = num(0)) gs.render_mode = static_cast<int>(*v);
            } else if (op == "Tf") {
                if (operands.size() >= 2 && operands[0].is_name() && operands[1].is_number()) {
                    gs.font = font_for(operands[0].as_name());
                    gs.font_size = operands[1].as_number();
                }
            } else if (op == "Td") {
                if (auto x = num(0), y = num(1); x && y) next_line(*x, *y);
            } else if (op == "TD") {
                if (auto x = num(0), y = num(1); x && y) {
                    gs.leading = -*y;
                    next_line(*x, *y);
                }
            } else if (op == "Tm") {
                auto v = nums();
                if (v.size() == 6) {
                    tlm = Matrix{v[0], v[1], v[2], v[3], v[4], v[5]};
                    tm = tlm;
                }
            } else if (op == "T*") {
                next_line(0, -gs.leading);
            } else if (op == "Tj") {
                if (!operands.empty() && operands.back().is_string()) show(operands.back().as_string());
            } else if (op == "'") {
                next_line(0, -gs.leading);
                if (!operands.empty() && operands.back().is_string()) show(operands.back().as_string());
            } else if (op == "\"") {
                if (operands.size() >= 3 && operands[0].is_number() && operands[1].is_number()) {
                    gs.word_spacing = operands[0].as_number();
                    gs.char_spacing = operands[1].as_number();
                }
                next_line(0, -gs.leading);
                if (!operands.empty() && operands.back().is_string()) show(operands.back().as_string());
            } else if (op == "TJ") {
                if (!operands.empty() && operands.back().is_array()) {
                    for (const Object& e : operands.back().as_array()) {
                        if (e.is_string()) {
                            show(e.as_string());
                        } else if (e.is_number()) {
                            double tx = -e.as_number() / 1000.0 * gs.font_size * gs.h_scale;
                            tm = Matrix{1, 0, 0, 1, tx, 0}.then(tm);
                        }
                    }
                }
            }
            // external objects
            else if (op == "Do") {
                if (!operands.empty() && operands.back().is_name()) {
                    do_xobject(operands.back().as_name(), resources, gs, depth);
                }
            }
            operands.clear();
        }
    }

private:
    std::optional<Object> operand(Lexer& lx, Token t) {
        using K = Token::Kind;
        switch (t.kind) {
        case K::Int: return Object(t.int_value);
        case K::Real: return Object(t.real_value);
        case K::Name: return Object(Name{std::move(t.text)});
        case K::String: return Object(std::move(t.text));
        case K::ArrayOpen: {
            Array arr;
            for (;;) {
                Token e = lx.next();
                if (e.kind == K::ArrayClose || e.kind == K::Eof) break;
                if (auto o = operand(lx, std::move(e))) arr.push_back(std::move(*o));
            }
            return Object(std::move(arr));
        }
        case K::DictOpen: {
            Dict d;
            for (;;) {
                Token k = lx.next();
                if (k.kind == K::DictClose || k.kind == K::Eof) break;
                if (k.kind != K::Name) continue;
                Token v = lx.next();
                if (v.kind == K::DictClose) break;
                if (auto o = operand(lx, std::move(v))) d.set(std::move(k.text), std::move(*o));
            }
            return Object(std::move(d));
        }
        case K::Keyword:
            if (t.text == "true") return Object(true);
            if (t.text == "false") return Object(false);
            if (t.text == "null") return Object();
            return std::nullopt;
        default:
            return std::nullopt;
        }
    }

    void inline_image(Lexer& lx, const GState& gs) {
        auto stream = std::make_shared<Stream>();
        for (;;) {
            Token k = lx.next();
            if (k.kind == Token::Kind::Eof) return;
            if (k.is_keyword("ID")) break;
            if (k.kind != Token::Kind::Name) continue;
            Token v = lx.next();
            if (auto o = operand(lx, std::move(v))) {
                stream->dict.set(expand_inline_key(k.text), expand_inline_value(*o));
            }
        }
        std::string_view data = lx.data();
        size_t start = lx.pos() + 1; // single whitespace after ID
        if (start > data.size()) return;
        size_t end = std::string_view::npos;
        // Unfiltered images have a computable length.
        const Object& w = stream->dict.get("Width");
        const Object& h = stream->dict.get("Height");
        if (!stream->dict.contains("Filter") && w.is_number() && h.is_number()) {
            int64_t bpc = stream->dict.get("BitsPerComponent").is_number() ? stream->dict.get("BitsPerComponent").as_int() : 1;
            int comps = 1;
            const Object& cs = stream->dict.get("ColorSpace");
            if (cs.is_name("DeviceRGB")) comps = 3;
            if (cs.is_name("DeviceCMYK")) comps = 4;
            if (stream->dict.get("ImageMask").is_bool() && stream->dict.get("ImageMask").as_bool()) bpc = 1;
            size_t len = static_cast<size_t>((w.as_int() * comps * bpc + 7) / 8 * h.as_int());
            if (start + len <= data.size()) end = start + len;
        }
        if (end == std::string_view::npos) {
            size_t p = start;
            while ((p = data.find("EI", p)) != std::string_view::npos) {
                bool before = p > 0 && is_pdf_whitespace(static_cast<unsigned char>(data[p - 1]));
                bool after = p + 2 >= data.size() || is_pdf_whitespace(static_cast<unsigned char>(data[p + 2]));
                if (before && after) break;
                p += 2;
            }
            end = p == std::string_view::npos ? data.size() : p - 1;
        }
        stream->raw = std::string(data.substr(start, end - start));
        size_t ei = data.find("EI", end);
        lx.seek(ei == std::string_view::npos ? data.size() : ei + 2);
        if (sink_.wants_graphics()) {
            ImageEvent ev{std::shared_ptr<const Stream>(std::move(stream)), gs.ctm, gs.fill};
            sink_.on_image(ev);
        }
    }

    void do_xobject(const std::string& name, const Dict& resources, const GState& gs, int depth) {
        Object xres = doc_.lookup(resources, "XObject");
        if (!xres.is_dict()) return;
        Object xo = doc_.lookup(xres.as_dict(), name);
        if (!xo.is_stream()) return;
        const Stream& s = xo.as_stream();
        Object subtype = doc_.resolve(s.dict.get("Subtype"));
        if (subtype.is_name("Image")) {
            if (sink_.wants_graphics()) sink_.on_image(ImageEvent{xo.stream_ptr(), gs.ctm, gs.fill});
            return;
        }
        if (!subtype.is_name("Form") || depth >= kMaxFormDepth) return;
        GState inner = gs;
        Object m = doc_.resolve(s.dict.get("Matrix"));
        if (m.is_array() && m.as_array().size() == 6) {
            const auto& a = m.as_array();
            if (std::all_of(a.begin(), a.end(), [](const Object& o) { return o.is_number(); })) {
                inner.ctm = Matrix{a[0].as_number(), a[1].as_number(), a[2].as_number(),
                                   a[3].as_number(), a[4].as_number(), a[5].as_number()}
                                .then(gs.ctm);
            }
        }
        Object res = doc_.resolve(s.dict.get("Resources"));
        std::string body;
        try {
            body = doc_.decode(s);
        } catch (const std::exception&) {
            return;
        }
        run(body, res.is_dict() ? res.as_dict() : resources, inner, depth + 1);
    }

    const Document& doc_;
    ContentSink& sink_;
};

} // namespace

void interpret_page(const Document& doc, size_t page_index, ContentSink& sink) {
    const PageInfo& page = doc.page(page_index);
    std::string content = doc.page_contents(page_index);
    Interpreter interp(doc, sink);
    interp.run(content, page.resources, GState{}, 0);
}

} // namespace polydoc::pdf
