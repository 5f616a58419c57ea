#include "lexer.hpp"

#include <charconv>
#include <cstdlib>
#include <stdexcept>

namespace polydoc::pdf {

namespace {

int hex_value(unsigned char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

bool looks_numeric(std::string_view s) {
    if (s.empty()) return false;
    size_t i = 0;
    if (s[0] == '+' || s[0] == '-') i = 1;
    bool digit = false;
    bool dot = false;
    for (; i < s.size(); ++i) {
        if (s[i] >= '0' && s[i] <= '9') {
            digit = true;
        } else if (s[i] == '.' && !dot) {
            dot = true;
        } else {
            return false;
        }
    }
    return digit;
}

} // namespace

void Lexer::skip_whitespace() {
    while (pos_ < data_.size()) {
        unsigned char c = static_cast<unsigned char>(data_[pos_]);
        if (is_pdf_whitespace(c)) {
            ++pos_;
        } else if (c == '%') {
            while (pos_ < data_.size() && data_[pos_] != '\n' && data_[pos_] != '\r') ++pos_;
        } else {
            break;
        }
    }
}

Token Lexer::next() {
    skip_whitespace();
    Token tok;
    if (pos_ >= data_.size()) return tok;

    unsigned char c = static_cast<unsigned char>(data_[pos_]);
    switch (c) {
    case '[': ++pos_; tok.kind = Token::Kind::ArrayOpen; return tok;
    case ']': ++pos_; tok.kind = Token::Kind::ArrayClose; return tok;
    case '{': ++pos_; tok.kind = Token::Kind::BraceOpen; return tok;
    case '}': ++pos_; tok.kind = Token::Kind::BraceClose; return tok;
    case '(':
        ++pos_;
        tok.kind = Token::Kind::String;
        tok.text = read_literal_string();
        return tok;
    case '/':
        ++pos_;
        tok.kind = Token::Kind::Name;
        tok.text = read_name();
        return tok;
    case '<':
        if (pos_ + 1 < data_.size() && data_[pos_ + 1] == '<') {
            pos_ += 2;
            tok.kind = Token::Kind::DictOpen;
            return tok;
        }
        ++pos_;
        tok.kind = Token::Kind::String;
        tok.text = read_hex_string();
        return tok;
    case '>':
        if (pos_ + 1 < data_.size() && data_[pos_ + 1] == '>') {
            pos_ += 2;
            tok.kind = Token::Kind::DictClose;
            return tok;
        }
        ++pos_; // stray '>' is skipped as an empty keyword
        tok.kind = Token::Kind::Keyword;
        return tok;
    case ')':
        ++pos_;
        tok.kind = Token::Kind::Keyword;
        return tok;
    default:
        break;
    }

    size_t start = pos_;
    while (pos_ < data_.size()) {
        unsigned char d = static_cast<unsigned char>(data_[pos_]);
        if (is_pdf_whitespace(d) || is_pdf_delimiter(d)) break;
        ++pos_;
    }
    std::string_view word = data_.substr(start, pos_ - start);
    if (looks_numeric(word)) {
        if (word.find('.') == std::string_view::npos) {
            int64_t v = 0;
            auto w = word[0] == '+' ? word.substr(1) : word;
            auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
            if (ec == std::errc{} && p == w.data() + w.size()) {
                tok.kind = Token::Kind::Int;
                tok.int_value = v;
                return tok;
            }
        }
        tok.kind = Token::Kind::Real;
        tok.real_value = std::strtod(std::string(word).c_str(), nullptr);
        return tok;
    }
    tok.kind = Token::Kind::Keyword;
    tok.text = std::string(word);
    return tok;
}

std::string Lexer::read_literal_string() {
    std::string out;
    int depth = 1;
    while (pos_ < data_.size()) {
        char c = data_[pos_++];
        if (c == '\\') {
            if (pos_ >= data_.size()) break;
            char e = data_[pos_++];
            switch (e) {
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            case 't': out.push_back('\t'); break;
            case 'b': out.push_back('\b'); break;
            case 'f': out.push_back('\f'); break;
            case '(': out.push_back('('); break;
            case ')': out.push_back(')'); break;
            case '\\': out.push_back('\\'); break;
            case '\r':
                if (pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
                break;
            case '\n': break;
            default:
                if (e >= '0' && e <= '7') {
                    int v = e - '0';
                    for (int k = 0; k < 2 && pos_ < data_.size() && data_[pos_] >= '0' &&
                                    data_[pos_] <= '7';
                         ++k) {
                        v = v * 8 + (data_[pos_++] - '0');
                    }
                    out.push_back(static_cast<char>(v & 0xFF));
                } else {
                    out.push_back(e);
                }
            }
        } else if (c == '(') {
            ++depth;
            out.push_back(c);
        } else if (c == ')') {
            if (--depth == 0) break;
            out.push_back(c);
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string Lexer::read_hex_string() {
    std::string out;
    int hi = -1;
    while (pos_ < data_.size()) {
        unsigned char c = static_cast<unsigned char>(data_[pos_++]);
        if (c == '>') break;
        int v = hex_value(c);
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

std::string Lexer::read_name() {
    std::string out;
    while (pos_ < data_.size()) {
        unsigned char c = static_cast<unsigned char>(data_[pos_]);
        if (is_pdf_whitespace(c) || is_pdf_delimiter(c)) break;
        ++pos_;
        if (c == '#' && pos_ + 1 < data_.size()) {
            int h = hex_value(static_cast<unsigned char>(data_[pos_]));
            int l = hex_value(static_cast<unsigned char>(data_[pos_ + 1]));
            if (h >= 0 && l >= 0) {
                out.push_back(static_cast<char>(h * 16 + l));
                pos_ += 2;
                continue;
            }
        }
        out.push_back(static_cast<char>(c));
    }
    return out;
}

Object Parser::parse_object() { return parse_from(lexer_.next()); }

Object Parser::parse_from(Token tok) {
    using K = Token::Kind;
    switch (tok.kind) {
    case K::Eof:
        throw std::runtime_error("unexpected end of data");
    case K::Int: {
        // Possible "num gen R".
        size_t save = lexer_.pos();
        Token t2 = lexer_.next();
        if (t2.kind == K::Int && tok.int_value >= 0 && t2.int_value >= 0) {
            Token t3 = lexer_.next();
            if (t3.is_keyword("R")) {
                return Ref{static_cast<uint32_t>(tok.int_value),
                           static_cast<uint16_t>(t2.int_value)};
            }
        }
        lexer_.seek(save);
        return tok.int_value;
    }
    case K::Real:
        return tok.real_value;
    case K::Name:
        return Name{std::move(tok.text)};
    case K::String:
        return std::move(tok.text);
    case K::ArrayOpen: {
        Array arr;
        for (;;) {
            Token t = lexer_.next();
            if (t.kind == K::ArrayClose) break;
            if (t.kind == K::Eof) throw std::runtime_error("unterminated array");
            arr.push_back(parse_from(std::move(t)));
        }
        return arr;
    }
    case K::DictOpen: {
        Dict dict;
        for (;;) {
            Token t = lexer_.next();
            if (t.kind == K::DictClose) break;
            if (t.kind == K::Eof) throw std::runtime_error("unterminated dictionary");
            if (t.kind != K::Name) continue; // tolerate junk between entries
            std::string key = std::move(t.text);
            Token vt = lexer_.next();
            if (vt.kind == K::DictClose) {
                dict.set(std::move(key), Object{});
                break;
            }
            dict.set(std::move(key), parse_from(std::move(vt)));
        }
        size_t save = lexer_.pos();
        Token after = lexer_.next();
        if (after.is_keyword("stream")) return parse_stream_body(std::move(dict));
        lexer_.seek(save);
        return dict;
    }
    case K::Keyword:
        if (tok.text == "null") return Object{};
        if (tok.text == "true") return true;
        if (tok.text == "false") return false;
        throw std::runtime_error("unexpected keyword '" + tok.text + "'");
    case K::ArrayClose:
    case K::DictClose:
    case K::BraceOpen:
    case K::BraceClose:
        break;
    }
    throw std::runtime_error("unexpected token");
}

Object Parser::parse_stream_body(Dict dict) {
    auto data = lexer_.data();
    size_t p = lexer_.pos();
    // "stream" is followed by CRLF or LF (tolerate a lone CR).
    if (p < data.size() && data[p] == '\r') ++p;
    if (p < data.size() && data[p] == '\n') ++p;

    std::optional<int64_t> length;
    const Object& len_obj = dict.get("Length");
    if (len_obj.is_int()) {
        length = len_obj.as_int();
    } else if (len_obj.is_ref() && length_) {
        length = length_(len_obj);
    }

    size_t end = std::string_view::npos;
    if (length && *length >= 0 && p + static_cast<size_t>(*length) <= data.size()) {
        size_t cand = p + static_cast<size_t>(*length);
        Lexer probe(data, cand);
        probe.skip_whitespace();
        if (data.substr(probe.pos(), 9) == "endstream") end = cand;
    }
    if (end == std::string_view::npos) {
        size_t found = data.find("endstream", p);
        if (found == std::string_view::npos) throw std::runtime_error("unterminated stream");
        end = found;
        // Drop the EOL that precedes the keyword.
        if (end > p && data[end - 1] == '\n') --end;
        if (end > p && data[end - 1] == '\r') --end;
    }
    auto stream = std::make_shared<Stream>();
    stream->dict = std::move(dict);
    stream->raw = std::string(data.substr(p, end - p));
    size_t kw = data.find("endstream", end);
    lexer_.seek(kw == std::string_view::npos ? data.size() : kw + 9);
    return std::shared_ptr<const Stream>(std::move(stream));
}

Parser::Indirect Parser::parse_indirect() {
    Token num = lexer_.next();
    Token gen = lexer_.next();
    Token kw = lexer_.next();
    if (num.kind != Token::Kind::Int || gen.kind != Token::Kind::Int || !kw.is_keyword("obj")) {
        throw std::runtime_error("expected indirect object header");
    }
    Indirect out;
    out.ref = Ref{static_cast<uint32_t>(num.int_value), static_cast<uint16_t>(gen.int_value)};
    size_t save = lexer_.pos();
    Token t = lexer_.next();
    if (t.is_keyword("endobj")) {
        lexer_.seek(save);
        return out; // empty object
    }
    out.value = parse_from(std::move(t));
    return out;
}

} // namespace polydoc::pdf
