// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace moeforge {

/// Raised for any invalid input: malformed files, incompatible experts,
/// bad recipes, out-of-range indices. The CLI maps it to exit code 1;
/// every other exception is treated as an internal failure.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace moeforge
