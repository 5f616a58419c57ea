#pragma once

#include <string>

#include "polydoc/pdf/document.hpp"

namespace polydoc::pdf {

/// Reconstructs reading-order text for one page from its embedded text.
/// Lines on the same baseline are joined with spaces, consecutive lines with
/// '\n', and vertical gaps larger than about 1.6 line heights become a blank
/// line so that paragraphs survive as blank-line separated blocks.
/// Returns an empty string for pages without embedded text.
std::string extract_page_text(const Document& doc, size_t page_index);

} // namespace polydoc::pdf
