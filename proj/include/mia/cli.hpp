#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace mia::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;

/// Parses `args` (without the program name) and runs the subcommand.
/// Messages go to `out`/`err`; the return value is the process exit code.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Runs `body` and maps what escapes it to an exit code: ValidationError and
/// its subclasses give 2, any other exception 1.
int run_guarded(const std::function<void()>& body, std::ostream& err);

}  // namespace mia::cli
