#include "filters.hpp"

#include <cstdint>
#include <cstdlib>
#include <stdexcept>

#include <zlib.h>

namespace polydoc::pdf {

namespace {

int64_t param_int(const Dict& d, std::string_view key, int64_t fallback) {
    const Object& o = d.get(key);
    return o.is_number() ? o.as_int() : fallback;
}

std::string unpredict(std::string data, const Dict& params) {
    int64_t predictor = param_int(params, "Predictor", 1);
    if (predictor <= 1) return data;
    int64_t colors = param_int(params, "Colors", 1);
    int64_t bpc = param_int(params, "BitsPerComponent", 8);
    int64_t columns = param_int(params, "Columns", 1);
    if (colors < 1 || bpc < 1 || columns < 1) throw std::runtime_error("bad predictor params");
    const size_t bpp = static_cast<size_t>(std::max<int64_t>(1, (colors * bpc + 7) / 8));
    const size_t row_len = static_cast<size_t>((colors * bpc * columns + 7) / 8);

    if (predictor == 2) {
        if (bpc != 8) throw std::runtime_error("TIFF predictor only supported for 8 bpc");
        for (size_t row = 0; row + row_len <= data.size(); row += row_len) {
            for (size_t i = bpp; i < row_len; ++i) {
                data[row + i] = static_cast<char>(static_cast<uint8_t>(data[row + i]) +
                                                  static_cast<uint8_t>(data[row + i - bpp]));
            }
        }
        return data;
    }

    // PNG predictors: every row carries its own filter-type byte.
    std::string out;
    std::vector<uint8_t> prev(row_len, 0), cur(row_len, 0);
    size_t pos = 0;
    while (pos < data.size()) {
        uint8_t type = static_cast<uint8_t>(data[pos++]);
        size_t n = std::min(row_len, data.size() - pos);
        for (size_t i = 0; i < row_len; ++i) {
            cur[i] = i < n ? static_cast<uint8_t>(data[pos + i]) : 0;
        }
        pos += n;
        for (size_t i = 0; i < row_len; ++i) {
            uint8_t left = i >= bpp ? cur[i - bpp] : 0;
            uint8_t up = prev[i];
            uint8_t upleft = i >= bpp ? prev[i - bpp] : 0;
            switch (type) {
            case 0: break;
            case 1: cur[i] = static_cast<uint8_t>(cur[i] + left); break;
            case 2: cur[i] = static_cast<uint8_t>(cur[i] + up); break;
            case 3: cur[i] = static_cast<uint8_t>(cur[i] + ((left + up) >> 1)); break;
            case 4: {
                int p = left + up - upleft;
                int pa = std::abs(p - left), pb = std::abs(p - up), pc = std::abs(p - upleft);
                uint8_t pred = (pa <= pb && pa <= pc) ? left : (pb <= pc ? up : upleft);
                cur[i] = static_cast<uint8_t>(cur[i] + pred);
                break;
            }
            default:
                throw std::runtime_error("bad PNG predictor row type");
            }
        }
        out.append(reinterpret_cast<const char*>(cur.data()), n);
        prev = cur;
    }
    return out;
}

std::string ascii_hex_decode(std::string_view in) {
    std::string out;
    int hi = -1;
    for (unsigned char c : in) {
        if (c == '>') break;
        int v = -1;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
        if (v < 0) continue;
        if (hi < 0) {
            hi = v;
        } else {
            out.push_back(static_cast<char>(hi * 16 + v));
            hi = -1;
        }
    }
    if (hi >= 0) out.push_back(static_cast<char>(hi * 16));
    return out;
}

std::string ascii85_decode(std::string_view in) {
    std::string out;
    uint32_t tuple = 0;
    int count = 0;
    size_t i = 0;
    if (in.substr(0, 2) == "<~") i = 2;
    for (; i < in.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(in[i]);
        if (c == '~') break;
        if (c == 'z' && count == 0) {
            out.append(4, '\0');
            continue;
        }
        if (c < '!' || c > 'u') continue;
        tuple = tuple * 85 + (c - '!');
        if (++count == 5) {
            for (int s = 3; s >= 0; --s) out.push_back(static_cast<char>((tuple >> (8 * s)) & 0xFF));
            tuple = 0;
            count = 0;
        }
    }
    if (count > 1) {
        for (int k = count; k < 5; ++k) tuple = tuple * 85 + 84;
        for (int s = 3; s >= 5 - count; --s) out.push_back(static_cast<char>((tuple >> (8 * s)) & 0xFF));
    }
    return out;
}

std::string run_length_decode(std::string_view in) {
    std::string out;
    size_t i = 0;
    while (i < in.size()) {
        uint8_t len = static_cast<uint8_t>(in[i++]);
        if (len == 128) break;
        if (len < 128) {
            size_t n = std::min<size_t>(len + 1, in.size() - i);
            out.append(in.substr(i, n));
            i += n;
        } else if (i < in.size()) {
            out.append(257 - len, in[i++]);
        }
    }
    return out;
}

std::string lzw_decode(std::string_view in, bool early_change) {
    std::string out;
    std::vector<std::string> table;
    auto reset = [&] {
        table.clear();
        for (int c = 0; c < 256; ++c) table.emplace_back(1, static_cast<char>(c));
        table.emplace_back(); // 256 clear
        table.emplace_back(); // 257 eod
    };
    reset();
    int code_len = 9;
    uint32_t buf = 0;
    int bits = 0;
    std::string prev;
    bool have_prev = false;
    for (unsigned char c : in) {
        buf = (buf << 8) | c;
        bits += 8;
        while (bits >= code_len) {
            uint32_t code = (buf >> (bits - code_len)) & ((1u << code_len) - 1);
            bits -= code_len;
            if (code == 256) {
                reset();
                code_len = 9;
                have_prev = false;
                continue;
            }
            if (code == 257) return out;
            std::string entry;
            if (code < table.size()) {
                entry = table[code];
                if (have_prev) table.push_back(prev + entry[0]);
            } else if (have_prev && code == table.size()) {
                entry = prev + prev[0];
                table.push_back(entry);
            } else {
                throw std::runtime_error("corrupt LZW data");
            }
            out += entry;
            prev = std::move(entry);
            have_prev = true;
            size_t limit = static_cast<size_t>((1u << code_len) - (early_change ? 1 : 0));
            if (table.size() >= limit && code_len < 12) ++code_len;
        }
    }
    return out;
}

} // namespace

std::string flate_decode(std::string_view in) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw std::runtime_error("inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof(buf);
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buf, sizeof(buf) - zs.avail_out);
        if (rc == Z_BUF_ERROR && zs.avail_in == 0) break; // truncated input
    }
    inflateEnd(&zs);
    // Many writers produce slightly damaged streams; keep whatever inflated cleanly.
    if (rc != Z_STREAM_END && out.empty()) throw std::runtime_error("corrupt Flate data");
    return out;
}

DecodeResult apply_filters(std::string_view raw, const std::vector<FilterStep>& steps) {
    DecodeResult result;
    std::string data(raw);
    for (const auto& step : steps) {
        const std::string& f = step.name;
        if (f == "FlateDecode" || f == "Fl") {
            data = unpredict(flate_decode(data), step.params);
        } else if (f == "LZWDecode" || f == "LZW") {
            data = unpredict(lzw_decode(data, param_int(step.params, "EarlyChange", 1) != 0),
                             step.params);
        } else if (f == "ASCIIHexDecode" || f == "AHx") {
            data = ascii_hex_decode(data);
        } else if (f == "ASCII85Decode" || f == "A85") {
            data = ascii85_decode(data);
        } else if (f == "RunLengthDecode" || f == "RL") {
            data = run_length_decode(data);
        } else if (f == "DCTDecode" || f == "DCT" || f == "JPXDecode" || f == "CCITTFaxDecode" ||
                   f == "CCF" || f == "JBIG2Decode") {
            result.image_codec = f == "DCT" ? "DCTDecode" : f;
            break;
        } else if (f == "Crypt") {
            throw std::runtime_error("encrypted stream");
        } else {
            throw std::runtime_error("unsupported filter " + f);
        }
    }
    result.data = std::move(data);
    return result;
}

} // namespace polydoc::pdf
