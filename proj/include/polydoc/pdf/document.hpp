#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "polydoc/pdf/object.hpp"

namespace polydoc::pdf {

/// Rectangle in default user space (points), normalized so x0<x1 and y0<y1.
struct Box {
    double x0 = 0, y0 = 0, x1 = 612, y1 = 792;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
};

struct PageInfo {
    Dict dict;
    Dict resources; // inherited resources already merged in
    Box media_box;
    int rotate = 0; // multiple of 90
};

/// Read-only view over a PDF file: cross-reference resolution, object and
/// compressed-object streams, page tree with attribute inheritance.
/// Not thread-safe (object cache is filled lazily). Encrypted files are rejected.
class Document {
public:
    /// Throws polydoc::Error{UnreadablePdf} for missing, corrupt or encrypted files.
    static Document open(const std::filesystem::path& path);
    static Document from_bytes(std::string bytes);

    Document(Document&&) noexcept;
    Document& operator=(Document&&) noexcept;
    ~Document();

    size_t page_count() const;
    const PageInfo& page(size_t index) const;

    /// Follows indirect references; returns null for dangling ones.
    Object resolve(const Object& obj) const;
    /// Resolves `dict[key]`.
    Object lookup(const Dict& dict, std::string_view key) const;

    /// Decodes a stream through its filter chain (image codecs are left encoded
    /// and reported in `codec` when non-null).
    std::string decode(const Stream& stream, std::string* codec = nullptr) const;

    /// Concatenated, decoded content streams of a page.
    std::string page_contents(size_t index) const;

private:
    struct Impl;
    explicit Document(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

} // namespace polydoc::pdf
