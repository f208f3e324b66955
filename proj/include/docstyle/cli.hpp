#pragma once
// Batch command-line front end.
//
// Exit codes: 0 success, 1 runtime failure (one line on stderr),
// 2 usage error (usage text on stderr).

#include <iosfwd>
#include <string>
#include <vector>

namespace docstyle {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

std::vector<std::string> command_names();

// args excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace docstyle
