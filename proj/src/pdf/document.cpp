#include "polydoc/pdf/document.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "filters.hpp"
#include "lexer.hpp"
#include "polydoc/error.hpp"
#include "polydoc/util.hpp"

namespace polydoc::pdf {

namespace {

struct XrefEntry {
    enum class Kind { Free, Offset, InStream } kind = Kind::Free;
    uint64_t offset = 0;      // Offset
    uint32_t stream_num = 0;  // InStream
    uint32_t stream_index = 0;
};

constexpr int kMaxResolveDepth = 32;
constexpr size_t kMaxPages = 100000;

[[noreturn]] void unreadable(const std::string& why) { throw Error(ErrorCode::UnreadablePdf, why); }

Box box_from(const Object& o, const Box& fallback) {
    if (!o.is_array()) return fallback;
    const auto& a = o.as_array();
    if (a.size() != 4 || !std::all_of(a.begin(), a.end(), [](const Object& x) { return x.is_number(); })) {
        return fallback;
    }
    Box b{a[0].as_number(), a[1].as_number(), a[2].as_number(), a[3].as_number()};
    if (b.x0 > b.x1) std::swap(b.x0, b.x1);
    if (b.y0 > b.y1) std::swap(b.y0, b.y1);
    if (b.width() <= 0 || b.height() <= 0) return fallback;
    return b;
}

} // namespace

struct Document::Impl {
    std::string bytes;
    std::map<uint32_t, XrefEntry> xref;
    Dict trailer;
    std::vector<PageInfo> pages;

    mutable std::unordered_map<uint32_t, Object> cache;
    mutable std::set<uint32_t> resolving;
    mutable std::unordered_map<uint32_t, std::vector<std::pair<uint32_t, size_t>>> objstm_index;
    mutable std::unordered_map<uint32_t, std::string> objstm_data;
    mutable std::optional<std::map<uint32_t, uint64_t>> scanned; // reconstruction fallback

    std::string_view view() const { return bytes; }

    void load() {
        auto head = view().substr(0, 1024);
        if (head.find("%PDF-") == std::string_view::npos) unreadable("missing %PDF header");
        bool ok = false;
        try {
            load_xref_chain();
            ok = trailer.contains("Root");
        } catch (const std::exception&) {
            ok = false;
        }
        if (!ok) reconstruct();
        if (trailer.contains("Encrypt")) unreadable("encrypted documents are not supported");
        load_pages();
    }

    // --- cross-reference loading -------------------------------------------------

    void load_xref_chain() {
        size_t sx = view().rfind("startxref");
        if (sx == std::string_view::npos) throw std::runtime_error("no startxref");
        Lexer lx(view(), sx + 9);
        Token t = lx.next();
        if (t.kind != Token::Kind::Int) throw std::runtime_error("bad startxref");
        std::set<int64_t> seen;
        std::optional<int64_t> offset = t.int_value;
        bool first = true;
        while (offset) {
            if (*offset < 0 || static_cast<size_t>(*offset) >= bytes.size() || !seen.insert(*offset).second) {
                throw std::runtime_error("bad xref offset");
            }
            Dict section_trailer = load_xref_section(static_cast<size_t>(*offset));
            if (first) {
                trailer = section_trailer;
                first = false;
            }
            if (const Object* stm = section_trailer.find("XRefStm"); stm && stm->is_int()) {
                if (seen.insert(stm->as_int()).second) load_xref_section(static_cast<size_t>(stm->as_int()));
            }
            const Object& prev = section_trailer.get("Prev");
            offset = prev.is_number() ? std::optional<int64_t>(prev.as_int()) : std::nullopt;
        }
    }

    /// Loads one table or stream section; entries already present (newer) win.
    Dict load_xref_section(size_t offset) {
        Lexer lx(view(), offset);
        size_t save = lx.pos();
        Token t = lx.next();
        if (t.is_keyword("xref")) return load_xref_table(lx);
        lx.seek(save);
        return load_xref_stream(lx);
    }

    Dict load_xref_table(Lexer& lx) {
        for (;;) {
            size_t save = lx.pos();
            Token t = lx.next();
            if (t.is_keyword("trailer")) break;
            if (t.kind != Token::Kind::Int) {
                lx.seek(save);
                throw std::runtime_error("bad xref table");
            }
            Token count = lx.next();
            if (count.kind != Token::Kind::Int) throw std::runtime_error("bad xref subsection");
            for (int64_t i = 0; i < count.int_value; ++i) {
                Token off = lx.next();
                Token gen = lx.next();
                Token kind = lx.next();
                if (off.kind != Token::Kind::Int || gen.kind != Token::Kind::Int ||
                    kind.kind != Token::Kind::Keyword) {
                    throw std::runtime_error("bad xref entry");
                }
                auto num = static_cast<uint32_t>(t.int_value + i);
                if (xref.count(num)) continue;
                XrefEntry e;
                if (kind.text == "n" && off.int_value > 0) {
                    e.kind = XrefEntry::Kind::Offset;
                    e.offset = static_cast<uint64_t>(off.int_value);
                }
                xref[num] = e;
            }
        }
        Parser p(lx);
        Object d = p.parse_object();
        if (!d.is_dict()) throw std::runtime_error("bad trailer");
        return d.as_dict();
    }

    Dict load_xref_stream(Lexer& lx) {
        Parser p(lx, [this](const Object& o) { return resolve_length(o); });
        auto ind = p.parse_indirect();
        if (!ind.value.is_stream()) throw std::runtime_error("xref offset is not a stream");
        const Stream& s = ind.value.as_stream();
        if (!s.dict.get("Type").is_name("XRef")) throw std::runtime_error("not an XRef stream");
        std::string data = decode_direct(s);

        const Object& w_obj = s.dict.get("W");
        if (!w_obj.is_array() || w_obj.as_array().size() < 3) throw std::runtime_error("bad /W");
        std::array<int, 3> w{};
        for (int i = 0; i < 3; ++i) w[i] = static_cast<int>(w_obj.as_array()[i].as_int());
        size_t row = static_cast<size_t>(w[0] + w[1] + w[2]);
        if (row == 0) throw std::runtime_error("bad /W widths");

        std::vector<std::pair<int64_t, int64_t>> ranges;
        const Object& idx = s.dict.get("Index");
        if (idx.is_array()) {
            const auto& a = idx.as_array();
            for (size_t i = 0; i + 1 < a.size(); i += 2) ranges.emplace_back(a[i].as_int(), a[i + 1].as_int());
        } else {
            ranges.emplace_back(0, s.dict.get("Size").is_number() ? s.dict.get("Size").as_int() : 0);
        }

        auto field = [&](size_t pos, int width, uint64_t dflt) -> uint64_t {
            if (width == 0) return dflt;
            uint64_t v = 0;
            for (int i = 0; i < width; ++i) v = (v << 8) | static_cast<uint8_t>(data[pos + static_cast<size_t>(i)]);
            return v;
        };
        size_t pos = 0;
        for (auto [start, count] : ranges) {
            for (int64_t i = 0; i < count && pos + row <= data.size(); ++i, pos += row) {
                auto num = static_cast<uint32_t>(start + i);
                uint64_t type = field(pos, w[0], 1);
                uint64_t f2 = field(pos + static_cast<size_t>(w[0]), w[1], 0);
                uint64_t f3 = field(pos + static_cast<size_t>(w[0] + w[1]), w[2], 0);
                if (xref.count(num)) continue;
                XrefEntry e;
                if (type == 1) {
                    e.kind = XrefEntry::Kind::Offset;
                    e.offset = f2;
                } else if (type == 2) {
                    e.kind = XrefEntry::Kind::InStream;
                    e.stream_num = static_cast<uint32_t>(f2);
                    e.stream_index = static_cast<uint32_t>(f3);
                }
                xref[num] = e;
            }
        }
        return s.dict;
    }

    /// Rebuilds the object map by scanning for "N G obj" when the xref is unusable.
    const std::map<uint32_t, uint64_t>& scan_objects() const {
        if (scanned) return *scanned;
        std::map<uint32_t, uint64_t> found;
        std::string_view v = view();
        size_t p = 0;
        while ((p = v.find("obj", p)) != std::string_view::npos) {
            size_t kw = p;
            p += 3;
            if (kw > 0 && !is_pdf_whitespace(static_cast<unsigned char>(v[kw - 1]))) continue;
            // walk back over "<num> <gen> "
            size_t q = kw;
            while (q > 0 && is_pdf_whitespace(static_cast<unsigned char>(v[q - 1]))) --q;
            size_t gen_end = q;
            while (q > 0 && std::isdigit(static_cast<unsigned char>(v[q - 1]))) --q;
            if (q == gen_end) continue;
            size_t gen_start = q;
            while (q > 0 && is_pdf_whitespace(static_cast<unsigned char>(v[q - 1]))) --q;
            if (q == gen_start) continue;
            size_t num_end = q;
            while (q > 0 && std::isdigit(static_cast<unsigned char>(v[q - 1]))) --q;
            if (q == num_end) continue;
            uint32_t num = static_cast<uint32_t>(std::stoul(std::string(v.substr(q, num_end - q))));
            found[num] = q; // later definitions (incremental updates) win
        }
        scanned = std::move(found);
        return *scanned;
    }

    void reconstruct() {
        xref.clear();
        cache.clear();
        trailer = Dict{};
        for (auto [num, off] : scan_objects()) {
            XrefEntry e;
            e.kind = XrefEntry::Kind::Offset;
            e.offset = off;
            xref[num] = e;
        }
        std::string_view v = view();
        size_t tp = v.rfind("trailer");
        while (tp != std::string_view::npos) {
            try {
                Lexer lx(v, tp + 7);
                Parser p(lx);
                Object d = p.parse_object();
                if (d.is_dict() && d.as_dict().contains("Root")) {
                    trailer = d.as_dict();
                    return;
                }
            } catch (const std::exception&) {
            }
            if (tp == 0) break;
            tp = v.rfind("trailer", tp - 1);
        }
        // No classic trailer: look for an XRef stream dictionary or the catalog itself.
        for (auto it = xref.rbegin(); it != xref.rend(); ++it) {
            Object o = load_object(it->first);
            if (o.is_stream() && o.as_stream().dict.get("Type").is_name("XRef") &&
                o.as_stream().dict.contains("Root")) {
                trailer = o.as_stream().dict;
                return;
            }
        }
        for (const auto& [num, e] : xref) {
            Object o = load_object(num);
            if (o.is_dict() && o.as_dict().get("Type").is_name("Catalog")) {
                trailer.set("Root", Ref{num, 0});
                return;
            }
        }
        unreadable("no document catalog found");
    }

    // --- object access ---------------------------------------------------------------

    std::optional<int64_t> resolve_length(const Object& o) const {
        Object r = resolve_depth(o, 0);
        if (r.is_number()) return r.as_int();
        return std::nullopt;
    }

    std::string decode_direct(const Stream& s, std::string* codec = nullptr) const {
        std::vector<FilterStep> steps;
        Object filter = resolve_depth(s.dict.get("Filter"), 0);
        Object parms = resolve_depth(s.dict.get("DecodeParms"), 0);
        if (parms.is_null()) parms = resolve_depth(s.dict.get("DP"), 0);
        if (filter.is_null()) filter = resolve_depth(s.dict.get("F"), 0);
        auto param_at = [&](size_t i) -> Dict {
            if (parms.is_dict() && i == 0) return parms.as_dict();
            if (parms.is_array() && i < parms.as_array().size()) {
                Object p = resolve_depth(parms.as_array()[i], 0);
                if (p.is_dict()) return p.as_dict();
            }
            return {};
        };
        if (filter.is_name()) {
            steps.push_back({filter.as_name(), param_at(0)});
        } else if (filter.is_array()) {
            const auto& arr = filter.as_array();
            for (size_t i = 0; i < arr.size(); ++i) {
                Object f = resolve_depth(arr[i], 0);
                if (f.is_name()) steps.push_back({f.as_name(), param_at(i)});
            }
        }
        DecodeResult r = apply_filters(s.raw, steps);
        if (codec) *codec = r.image_codec;
        return std::move(r.data);
    }

    Object parse_at(uint64_t offset, uint32_t expect) const {
        if (offset >= bytes.size()) return {};
        Lexer lx(view(), static_cast<size_t>(offset));
        Parser p(lx, [this](const Object& o) { return resolve_length(o); });
        auto ind = p.parse_indirect();
        if (ind.ref.num != expect) throw std::runtime_error("xref points at wrong object");
        return ind.value;
    }

    Object load_from_objstm(uint32_t stream_num, uint32_t index, uint32_t expect) const {
        auto it = objstm_index.find(stream_num);
        if (it == objstm_index.end()) {
            Object so = load_object(stream_num);
            if (!so.is_stream()) return {};
            const Stream& s = so.as_stream();
            std::string data = decode_direct(s);
            int64_t n = resolve_depth(s.dict.get("N"), 0).is_number() ? resolve_depth(s.dict.get("N"), 0).as_int() : 0;
            int64_t first = resolve_depth(s.dict.get("First"), 0).is_number() ? resolve_depth(s.dict.get("First"), 0).as_int() : 0;
            std::vector<std::pair<uint32_t, size_t>> offsets;
            Lexer lx(data);
            for (int64_t i = 0; i < n; ++i) {
                Token a = lx.next();
                Token b = lx.next();
                if (a.kind != Token::Kind::Int || b.kind != Token::Kind::Int) break;
                offsets.emplace_back(static_cast<uint32_t>(a.int_value),
                                     static_cast<size_t>(first + b.int_value));
            }
            objstm_data[stream_num] = std::move(data);
            it = objstm_index.emplace(stream_num, std::move(offsets)).first;
        }
        const auto& offsets = it->second;
        const std::string& data = objstm_data[stream_num];
        // Prefer the index slot; fall back to searching by number.
        auto parse_slot = [&](size_t slot) -> std::optional<Object> {
            if (slot >= offsets.size() || offsets[slot].first != expect) return std::nullopt;
            if (offsets[slot].second >= data.size()) return std::nullopt;
            Lexer lx(data, offsets[slot].second);
            Parser p(lx);
            return p.parse_object();
        };
        if (auto o = parse_slot(index)) return *o;
        for (size_t i = 0; i < offsets.size(); ++i) {
            if (auto o = parse_slot(i)) return *o;
        }
        return {};
    }

    Object load_object(uint32_t num) const {
        if (auto c = cache.find(num); c != cache.end()) return c->second;
        if (!resolving.insert(num).second) return {}; // reference cycle
        Object result;
        try {
            auto it = xref.find(num);
            if (it != xref.end()) {
                const XrefEntry& e = it->second;
                if (e.kind == XrefEntry::Kind::Offset) {
                    try {
                        result = parse_at(e.offset, num);
                    } catch (const std::exception&) {
                        const auto& sc = scan_objects();
                        if (auto s = sc.find(num); s != sc.end() && s->second != e.offset) {
                            result = parse_at(s->second, num);
                        }
                    }
                } else if (e.kind == XrefEntry::Kind::InStream) {
                    result = load_from_objstm(e.stream_num, e.stream_index, num);
                }
            }
        } catch (const std::exception&) {
            result = Object{};
        }
        resolving.erase(num);
        cache[num] = result;
        return result;
    }

    Object resolve_depth(const Object& o, int depth) const {
        if (!o.is_ref()) return o;
        if (depth > kMaxResolveDepth) return {};
        return resolve_depth(load_object(o.as_ref().num), depth + 1);
    }

    // --- page tree -------------------------------------------------------------------

    void load_pages() {
        Object root = resolve_depth(trailer.get("Root"), 0);
        if (!root.is_dict()) unreadable("document catalog is missing");
        Object pages_root = resolve_depth(root.as_dict().get("Pages"), 0);
        if (!pages_root.is_dict()) return; // zero pages; caller reports NoPages
        std::set<uint32_t> visited;
        walk(pages_root.as_dict(), Dict{}, Box{}, 0, visited, 0);
    }

    void walk(const Dict& node, Dict inherited_res, Box inherited_box, int inherited_rotate,
              std::set<uint32_t>& visited, int depth) {
        if (depth > 64 || pages.size() > kMaxPages) return;
        Object res = resolve_depth(node.get("Resources"), 0);
        if (res.is_dict()) inherited_res = res.as_dict();
        Object mb = resolve_depth(node.get("MediaBox"), 0);
        inherited_box = box_from(resolve_array(mb), inherited_box);
        Object cb = resolve_depth(node.get("CropBox"), 0);
        Box crop = box_from(resolve_array(cb), inherited_box);
        Object rot = resolve_depth(node.get("Rotate"), 0);
        if (rot.is_number()) inherited_rotate = static_cast<int>(((rot.as_int() % 360) + 360) % 360);

        Object kids = resolve_depth(node.get("Kids"), 0);
        Object type = resolve_depth(node.get("Type"), 0);
        bool is_leaf = type.is_name("Page") || (!type.is_name("Pages") && !kids.is_array());
        if (is_leaf) {
            PageInfo info;
            info.dict = node;
            info.resources = inherited_res;
            info.media_box = crop;
            info.rotate = inherited_rotate;
            pages.push_back(std::move(info));
            return;
        }
        if (!kids.is_array()) return;
        for (const Object& kid : kids.as_array()) {
            if (kid.is_ref() && !visited.insert(kid.as_ref().num).second) continue;
            Object k = resolve_depth(kid, 0);
            if (k.is_dict()) walk(k.as_dict(), inherited_res, inherited_box, inherited_rotate, visited, depth + 1);
        }
    }

    Object resolve_array(const Object& o) const {
        if (!o.is_array()) return o;
        Array out;
        for (const Object& e : o.as_array()) out.push_back(resolve_depth(e, 0));
        return out;
    }
};

Document::Document(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Document::Document(Document&&) noexcept = default;
Document& Document::operator=(Document&&) noexcept = default;
Document::~Document() = default;

Document Document::open(const std::filesystem::path& path) {
    std::string bytes;
    try {
        bytes = util::read_file(path);
    } catch (const std::exception& e) {
        unreadable(e.what());
    }
    return from_bytes(std::move(bytes));
}

Document Document::from_bytes(std::string bytes) {
    auto impl = std::make_unique<Impl>();
    impl->bytes = std::move(bytes);
    impl->load();
    return Document(std::move(impl));
}

size_t Document::page_count() const { return impl_->pages.size(); }

const PageInfo& Document::page(size_t index) const { return impl_->pages.at(index); }

Object Document::resolve(const Object& obj) const { return impl_->resolve_depth(obj, 0); }

Object Document::lookup(const Dict& dict, std::string_view key) const {
    return impl_->resolve_depth(dict.get(key), 0);
}

std::string Document::decode(const Stream& stream, std::string* codec) const {
    return impl_->decode_direct(stream, codec);
}

std::string Document::page_contents(size_t index) const {
    const PageInfo& p = page(index);
    Object contents = lookup(p.dict, "Contents");
    std::string out;
    auto add = [&](const Object& o) {
        Object s = resolve(o);
        if (!s.is_stream()) return;
        out += decode(s.as_stream());
        out.push_back('\n');
    };
    if (contents.is_stream()) {
        add(contents);
    } else if (contents.is_array()) {
        for (const Object& o : contents.as_array()) add(o);
    }
    return out;
}

} // namespace polydoc::pdf
