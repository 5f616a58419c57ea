#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "polydoc/pdf/object.hpp"

namespace polydoc::pdf {

struct FilterStep {
    std::string name;
    Dict params;
};

struct DecodeResult {
    std::string data;
    /// Name of an image codec left undecoded (e.g. "DCTDecode"), empty when fully decoded.
    std::string image_codec;
};

/// Applies the filter chain. Image codecs terminate the chain and are reported,
/// since only the rasterizer knows how to consume them. Throws std::runtime_error
/// for unsupported or corrupt filters.
DecodeResult apply_filters(std::string_view raw, const std::vector<FilterStep>& steps);

std::string flate_decode(std::string_view in);

} // namespace polydoc::pdf
