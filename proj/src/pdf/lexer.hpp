#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "polydoc/pdf/object.hpp"

namespace polydoc::pdf {

struct Token {
    enum class Kind {
        Eof,
        Int,
        Real,
        Name,
        String,
        ArrayOpen,
        ArrayClose,
        DictOpen,
        DictClose,
        Keyword,
        BraceOpen,
        BraceClose,
    };
    Kind kind = Kind::Eof;
    std::string text; // name, string bytes, or keyword
    int64_t int_value = 0;
    double real_value = 0.0;

    bool is_keyword(std::string_view k) const { return kind == Kind::Keyword && text == k; }
};

inline bool is_pdf_whitespace(unsigned char c) {
    return c == 0 || c == '\t' || c == '\n' || c == '\f' || c == '\r' || c == ' ';
}

inline bool is_pdf_delimiter(unsigned char c) {
    return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' ||
           c == '}' || c == '/' || c == '%';
}

class Lexer {
public:
    explicit Lexer(std::string_view data, size_t pos = 0) : data_(data), pos_(pos) {}

    Token next();
    size_t pos() const { return pos_; }
    void seek(size_t pos) { pos_ = pos; }
    std::string_view data() const { return data_; }
    void skip_whitespace();

private:
    std::string read_literal_string();
    std::string read_hex_string();
    std::string read_name();

    std::string_view data_;
    size_t pos_;
};

/// Resolves an indirect /Length while a stream body is being read.
using LengthResolver = std::function<std::optional<int64_t>(const Object&)>;

class Parser {
public:
    explicit Parser(Lexer& lexer, LengthResolver length = {})
        : lexer_(lexer), length_(std::move(length)) {}

    /// Parses one object; throws std::runtime_error on malformed input.
    Object parse_object();

    /// Parses "num gen obj ... endobj" at the lexer's position.
    struct Indirect {
        Ref ref;
        Object value;
    };
    Indirect parse_indirect();

private:
    Object parse_from(Token tok);
    Object parse_stream_body(Dict dict);

    Lexer& lexer_;
    LengthResolver length_;
};

} // namespace polydoc::pdf
