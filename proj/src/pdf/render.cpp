#include "polydoc/pdf/render.hpp"

#include <cmath>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "content.hpp"
#include "polydoc/error.hpp"

namespace polydoc::pdf {

namespace {

constexpr int kMaxSidePx = 14400;
constexpr int kShift = 4; // sub-pixel bits for OpenCV polygon drawing
constexpr double kHersheyCapHeight = 21.0;
constexpr double kCapHeightEm = 0.718;

cv::Scalar bgr(const Rgb& c) {
    return {std::round(c.b * 255), std::round(c.g * 255), std::round(c.r * 255)};
}

char ascii_for(char32_t c) {
    if (c >= 0x20 && c < 0x7F) return static_cast<char>(c);
    switch (c) {
    case 0x2018: case 0x2019: case 0x201A: return '\'';
    case 0x201C: case 0x201D: case 0x201E: return '"';
    case 0x2013: case 0x2014: case 0x2212: return '-';
    case 0x2022: case 0xB7: return '*';
    case 0xA0: return ' ';
    default: return '?';
    }
}

int components_of(const Document& doc, const Object& cs_in, Object* indexed_base, std::string* lookup, int* hival) {
    Object cs = doc.resolve(cs_in);
    if (cs.is_name()) {
        const std::string& n = cs.as_name();
        if (n == "DeviceRGB" || n == "CalRGB" || n == "RGB") return 3;
        if (n == "DeviceCMYK" || n == "CMYK") return 4;
        return 1;
    }
    if (cs.is_array() && !cs.as_array().empty()) {
        const auto& a = cs.as_array();
        Object family = doc.resolve(a[0]);
        if (family.is_name("ICCBased") && a.size() > 1) {
            Object s = doc.resolve(a[1]);
            if (s.is_stream()) {
                Object n = doc.resolve(s.as_stream().dict.get("N"));
                if (n.is_number()) return static_cast<int>(n.as_int());
            }
            return 3;
        }
        if (family.is_name("CalRGB") || family.is_name("Lab")) return 3;
        if ((family.is_name("Indexed") || family.is_name("I")) && a.size() >= 4 && indexed_base) {
            *indexed_base = doc.resolve(a[1]);
            Object hv = doc.resolve(a[2]);
            *hival = hv.is_number() ? static_cast<int>(hv.as_int()) : 255;
            Object lk = doc.resolve(a[3]);
            if (lk.is_string()) *lookup = lk.as_string();
            else if (lk.is_stream()) *lookup = doc.decode(lk.as_stream());
            return -1; // indexed marker
        }
    }
    return 1;
}

/// Decodes an image XObject into BGR (colour) or a single-channel paint mask.
bool decode_image(const Document& doc, const Stream& s, cv::Mat& out, bool& is_mask) {
    auto get = [&](std::string_view k) { return doc.resolve(s.dict.get(k)); };
    Object wo = get("Width"), ho = get("Height");
    if (!wo.is_number() || !ho.is_number()) return false;
    int w = static_cast<int>(wo.as_int()), h = static_cast<int>(ho.as_int());
    if (w <= 0 || h <= 0 || w > 20000 || h > 20000) return false;
    Object mask_flag = get("ImageMask");
    is_mask = mask_flag.is_bool() && mask_flag.as_bool();
    Object bpc_o = get("BitsPerComponent");
    int bpc = is_mask ? 1 : (bpc_o.is_number() ? static_cast<int>(bpc_o.as_int()) : 8);
    Object decode_arr = get("Decode");
    bool inverted = decode_arr.is_array() && decode_arr.as_array().size() >= 2 &&
                    decode_arr.as_array()[0].is_number() && decode_arr.as_array()[0].as_number() > 0.5;

    std::string codec;
    std::string data = doc.decode(s, &codec);
    if (codec == "DCTDecode") {
        std::vector<uchar> buf(data.begin(), data.end());
        out = cv::imdecode(buf, cv::IMREAD_COLOR);
        is_mask = false;
        return !out.empty();
    }
    if (!codec.empty()) return false;

    Object base;
    std::string lookup;
    int hival = 0;
    int comps = is_mask ? 1 : components_of(doc, get("ColorSpace"), &base, &lookup, &hival);
    bool indexed = comps == -1;
    int base_comps = 1;
    if (indexed) {
        comps = 1;
        base_comps = components_of(doc, base, nullptr, nullptr, nullptr);
    }
    if (bpc != 1 && bpc != 2 && bpc != 4 && bpc != 8 && bpc != 16) return false;
    size_t stride = (static_cast<size_t>(w) * static_cast<size_t>(comps) * static_cast<size_t>(bpc) + 7) / 8;
    if (data.size() < stride * static_cast<size_t>(h)) data.resize(stride * static_cast<size_t>(h), '\0');

    auto sample = [&](int row, size_t idx) -> int {
        const auto* p = reinterpret_cast<const uint8_t*>(data.data()) + static_cast<size_t>(row) * stride;
        switch (bpc) {
        case 8: return p[idx];
        case 16: return p[idx * 2];
        default: {
            size_t bit = idx * static_cast<size_t>(bpc);
            int v = (p[bit / 8] >> (8 - bpc - static_cast<int>(bit % 8))) & ((1 << bpc) - 1);
            return v;
        }
        }
    };
    int maxv = bpc == 16 ? 255 : (1 << std::min(bpc, 8)) - 1;

    if (is_mask) {
        out = cv::Mat(h, w, CV_8UC1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                bool paint = sample(y, static_cast<size_t>(x)) == 0;
                if (inverted) paint = !paint;
                out.at<uchar>(y, x) = paint ? 255 : 0;
            }
        }
        return true;
    }

    out = cv::Mat(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double r, g, b;
            if (indexed) {
                int i = std::min(sample(y, static_cast<size_t>(x)), hival);
                size_t off = static_cast<size_t>(i) * static_cast<size_t>(base_comps);
                auto lk = [&](size_t k) { return off + k < lookup.size() ? static_cast<uint8_t>(lookup[off + k]) / 255.0 : 0.0; };
                if (base_comps == 3) {
                    r = lk(0); g = lk(1); b = lk(2);
                } else if (base_comps == 4) {
                    double k = lk(3);
                    r = (1 - lk(0)) * (1 - k); g = (1 - lk(1)) * (1 - k); b = (1 - lk(2)) * (1 - k);
                } else {
                    r = g = b = lk(0);
                }
            } else {
                size_t base_idx = static_cast<size_t>(x) * static_cast<size_t>(comps);
                auto sv = [&](int k) {
                    double v = sample(y, base_idx + static_cast<size_t>(k)) / static_cast<double>(maxv);
                    return inverted ? 1 - v : v;
                };
                if (comps == 3) {
                    r = sv(0); g = sv(1); b = sv(2);
                } else if (comps == 4) {
                    double k = sv(3);
                    r = (1 - sv(0)) * (1 - k); g = (1 - sv(1)) * (1 - k); b = (1 - sv(2)) * (1 - k);
                } else {
                    r = g = b = sv(0);
                }
            }
            out.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uchar>(std::lround(b * 255)),
                                                static_cast<uchar>(std::lround(g * 255)),
                                                static_cast<uchar>(std::lround(r * 255)));
        }
    }
    return true;
}

class Rasterizer : public ContentSink {
public:
    Rasterizer(const Document& doc, cv::Mat& canvas, Matrix device, double scale)
        : doc_(doc), canvas_(canvas), device_(device), scale_(scale) {}

    void on_path(const PathEvent& ev) override {
        std::vector<std::vector<cv::Point>> polys;
        for (const auto& sp : ev.subpaths) {
            std::vector<cv::Point> pts;
            for (const auto& p : sp) {
                auto d = device_.apply(p[0], p[1]);
                pts.emplace_back(static_cast<int>(std::lround(d[0] * (1 << kShift))),
                                 static_cast<int>(std::lround(d[1] * (1 << kShift))));
            }
            if (!pts.empty()) polys.push_back(std::move(pts));
        }
        if (polys.empty()) return;
        if (ev.fill) cv::fillPoly(canvas_, polys, bgr(ev.fill_color), cv::LINE_AA, kShift);
        if (ev.stroke) {
            int thickness = std::max(1, static_cast<int>(std::lround(ev.line_width * scale_)));
            for (size_t i = 0; i < polys.size(); ++i) {
                bool closed = i < ev.closed.size() && ev.closed[i];
                cv::polylines(canvas_, std::vector<std::vector<cv::Point>>{polys[i]}, closed,
                              bgr(ev.stroke_color), thickness, cv::LINE_AA, kShift);
            }
        }
    }

    void on_text(const TextEvent& ev) override {
        if (ev.render_mode == 3 || ev.render_mode == 7) return; // invisible
        for (const PlacedGlyph& g : ev.glyphs) {
            if (g.is_space || g.text.empty()) continue;
            std::string s;
            for (char32_t c : g.text) {
                if (c == 0xFB01) s += "fi";
                else if (c == 0xFB02) s += "fl";
                else s.push_back(ascii_for(c));
            }
            double size_px = g.size * scale_;
            if (size_px < 1) continue;
            auto d = device_.apply(g.x, g.y);
            double font_scale = size_px * kCapHeightEm / kHersheyCapHeight;
            int thickness = std::max(1, static_cast<int>(std::lround(size_px / 12.0)));
            cv::putText(canvas_, s, cv::Point(static_cast<int>(std::lround(d[0])), static_cast<int>(std::lround(d[1]))),
                        cv::FONT_HERSHEY_SIMPLEX, font_scale, bgr(ev.fill), thickness, cv::LINE_AA);
        }
    }

    void on_image(const ImageEvent& ev) override {
        cv::Mat img;
        bool is_mask = false;
        try {
            if (!decode_image(doc_, *ev.stream, img, is_mask)) return;
        } catch (const std::exception&) {
            return; // undecodable images are skipped, the rest of the page still renders
        }
        Matrix unit{1.0 / img.cols, 0, 0, -1.0 / img.rows, 0, 1};
        Matrix m = unit.then(ev.ctm).then(device_);
        cv::Mat affine = (cv::Mat_<double>(2, 3) << m.a, m.c, m.e, m.b, m.d, m.f);
        if (is_mask) {
            cv::Mat warped = cv::Mat::zeros(canvas_.size(), CV_8UC1);
            cv::warpAffine(img, warped, affine, canvas_.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, 0);
            canvas_.setTo(bgr(ev.fill), warped > 127);
        } else {
            cv::warpAffine(img, canvas_, affine, canvas_.size(), cv::INTER_LINEAR, cv::BORDER_TRANSPARENT);
        }
    }

private:
    const Document& doc_;
    cv::Mat& canvas_;
    Matrix device_;
    double scale_;
};

} // namespace

RenderedPage render_page(const Document& doc, size_t page_index, int dpi) {
    auto fail = [&](const std::string& why) -> Error {
        return Error(ErrorCode::RenderFailure, "page " + std::to_string(page_index) + ": " + why);
    };
    if (dpi <= 0) throw fail("dpi must be positive");
    const PageInfo& page = doc.page(page_index);
    double scale = dpi / 72.0;
    int w = static_cast<int>(std::ceil(page.media_box.width() * scale - 1e-6));
    int h = static_cast<int>(std::ceil(page.media_box.height() * scale - 1e-6));
    if (w <= 0 || h <= 0 || w > kMaxSidePx || h > kMaxSidePx) throw fail("page size out of range");

    cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    Matrix device{scale, 0, 0, -scale, -page.media_box.x0 * scale, page.media_box.y1 * scale};
    Rasterizer raster(doc, canvas, device, scale);
    try {
        interpret_page(doc, page_index, raster);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw fail(e.what());
    }
    switch (page.rotate) {
    case 90: cv::rotate(canvas, canvas, cv::ROTATE_90_CLOCKWISE); break;
    case 180: cv::rotate(canvas, canvas, cv::ROTATE_180); break;
    case 270: cv::rotate(canvas, canvas, cv::ROTATE_90_COUNTERCLOCKWISE); break;
    default: break;
    }
    std::vector<uchar> buf;
    if (!cv::imencode(".png", canvas, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) throw fail("PNG encoding failed");
    return RenderedPage{canvas.cols, canvas.rows, std::string(buf.begin(), buf.end())};
}

} // namespace polydoc::pdf
