// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace splat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

/// Parses and runs one command line (argv[0] is the program name).
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace splat::cli
