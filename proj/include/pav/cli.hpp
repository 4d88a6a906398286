#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pav::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitBackend = 4;

enum class RunStatus { Pending, InProgress, Finalized, Failed };
std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);
/// Throws std::logic_error on a backwards transition (e.g. finalized -> pending).
RunStatus advance(RunStatus from, RunStatus to);

/// Deterministic run id for the prompt at `index` (0-based line among non-blank lines).
std::string run_id_for(std::size_t index, const std::string& prompt);

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pav::cli
