#pragma once

#include <string>

#include "polydoc/pdf/document.hpp"

namespace polydoc::pdf {

struct RenderedPage {
    int width = 0;
    int height = 0;
    std::string png; // encoded PNG bytes
};

/// Rasterizes a page at `dpi` onto a white RGB canvas: filled and stroked
/// paths, raster images (Flate/uncompressed/JPEG, stencil masks) and visible
/// text drawn with a built-in stroke font. Output is deterministic for a given
/// input. Throws polydoc::Error{RenderFailure} when the page cannot be drawn.
RenderedPage render_page(const Document& doc, size_t page_index, int dpi);

} // namespace polydoc::pdf
