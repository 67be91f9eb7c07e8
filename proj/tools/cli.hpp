#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace capvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitRuntime = 1;

// Parses and executes one command line; never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace capvae::cli
