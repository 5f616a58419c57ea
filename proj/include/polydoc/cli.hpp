#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "polydoc/error.hpp"

namespace polydoc::cli {

/// 0 ok, 2 config, 3 ingest, 4 network, 5 evaluation; retrieval errors and
/// anything unexpected exit 1.
int exit_code(ErrorCategory category);

/// Variant names used by `ablate`, in report order.
inline constexpr const char* kAblationVariants[] = {"full", "no_text", "no_image", "no_general_critical"};

/// Entry point for the `polydoc` executable. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace polydoc::cli
