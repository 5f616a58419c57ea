#pragma once

#include <functional>
#include <string>

#include <gtest/gtest.h>

#include "polydoc/error.hpp"

namespace polydoc::testing {

/// Code of the polydoc::Error raised by `f`; records a test failure when none is.
inline ErrorCode code_of(const std::function<void()>& f, std::string* message = nullptr) {
    try {
        f();
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.code();
    }
    ADD_FAILURE() << "no polydoc::Error thrown";
    return ErrorCode::ConfigInvalid;
}

} // namespace polydoc::testing
