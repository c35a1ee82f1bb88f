#pragma once

#include <iosfwd>

namespace asl::cli {

/// Entry point of the `asl` tool; returns the process exit code (see ExitCode).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace asl::cli
