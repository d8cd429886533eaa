#pragma once

#include <string>
#include <vector>

namespace mvdens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitEstimation = 1;
inline constexpr int kExitInput = 2;

/// Runs one command line (args excludes the program name); returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace mvdens::cli
