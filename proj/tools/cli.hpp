#ifndef PPCA_TOOLS_CLI_HPP
#define PPCA_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace ppca::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kBadInput = 2;
inline constexpr int kNumeric = 3;

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace ppca::cli

#endif  // PPCA_TOOLS_CLI_HPP
