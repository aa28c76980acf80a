#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kt::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kData = 2;
inline constexpr int kNumeric = 3;

// Runs one invocation of `ktriage`. `args` excludes the program name.
// Results go to `out`; the resolved configuration, progress and errors go
// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kt::cli
