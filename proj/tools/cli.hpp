#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tgr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitService = 3;
inline constexpr int kExitInvariant = 4;

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

} // namespace tgr::cli
