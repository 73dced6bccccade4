#pragma once
// Command-line front end: `bld <subcommand> [flags]`.

#include <iosfwd>
#include <string>
#include <vector>

namespace bld {

inline constexpr const char* kVersion = "0.1.0";

/// Exit status: 0 ok, 1 input error, 2 internal error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace bld
