#pragma once

#include <string>
#include <vector>

namespace floodsr::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { ok = 0, usage_error = 2, data_error = 3, internal_error = 4 };

/// Runs one subcommand; args exclude the program name. Errors are reported
/// on stderr as a single `error code=<n> kind=<Kind> message="..."` line.
int run(const std::vector<std::string>& args);

int main_entry(int argc, char** argv);

}  // namespace floodsr::cli
