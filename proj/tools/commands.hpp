#pragma once

#include <iosfwd>

#include "run_config.hpp"

namespace asl::cli {

/// Runs one resolved command, writing its artifacts, `run.resolved` and `manifest.json` into
/// `config.out`. Library exceptions propagate; run_cli maps them to exit codes.
void run_command(RunConfig config, std::ostream& log);

}  // namespace asl::cli
