// Copyright 2026 The moeforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "moeforge/arch.hpp"

namespace moeforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// Runs one invocation; args excludes the program name. Exit codes: 0 success,
/// 1 user error (bad flags, invalid input, violated invariant), 2 internal error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Architecture file: {"num_layers", "hidden_size", "ffn_intermediate_size",
/// "num_heads", "num_kv_heads", "vocab_size", optional "norm_eps", "rope_theta"}.
ArchDescriptor arch_from_json(const nlohmann::json& j);
nlohmann::json arch_to_json(const ArchDescriptor& arch);

/// "1,5,9" -> {1, 5, 9}
std::vector<int> parse_int_list(const std::string& text);

}  // namespace moeforge::cli
