#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asl/geometry.hpp"
#include "asl/signal_sim.hpp"
#include "asl/srp.hpp"
#include "asl/training.hpp"

namespace asl::cli {

/// Process exit codes, one class per failure kind.
enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kConfigError = 2,
  kMissingInput = 3,
  kNumericFailure = 4,
  kFormatError = 5,
};

struct SrpSettings {
  double resolution = 0.05;
  bool search_z = true;
  bool all_pairs = false;
  SrpOptions options;
};

/// Command inputs; paths are absolute once resolved.
struct Inputs {
  std::string corpus;
  std::string dataset;
  std::string checkpoint;
  std::vector<std::string> sequences;
  std::vector<std::string> test_ids;
  std::vector<std::string> reports;
  std::string reference;
  std::string frames;
  int table = 0;
  std::string title;
  std::string method;
  std::string average = "pooled";
  bool show_reference = true;
  std::string raw;
  std::string mapping;
  std::uint64_t epoch = 1;
};

/// Defaults, then the config file, then command-line overrides, checked and typed.
struct RunConfig {
  std::string command;
  std::string out;
  std::uint64_t seed = 1;
  double window_ms = 80.0;
  /// False when neither the config nor the command line set the window length.
  bool window_ms_explicit = false;
  bool deterministic = false;
  unsigned workers = 1;
  IdiapConfig geometry;
  SourceBox source_box;
  NoiseSpec noise;
  TrainConfig training;
  SrpSettings srp;
  Inputs inputs;

  /// The resolved configuration as JSON; accepted back as a config file.
  nlohmann::json to_json() const;
};

/// Merges `config_path` (may be empty) and `overrides` (same schema as the config file, paths
/// relative to the working directory) for `command`. Unknown keys raise asl::ConfigError.
RunConfig resolve_run_config(const std::string& command, const std::string& config_path,
                             const nlohmann::json& overrides);

/// Hex FNV-1a 64 of a file's bytes; throws asl::MissingInputError when it cannot be read.
std::string file_hash(const std::string& path, std::uintmax_t* bytes = nullptr);

/// Inputs and outputs of one run with content hashes, written as `manifest.json`.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {}
  void add_input(const std::string& role, const std::string& path);
  void add_output(const std::string& path);
  void write(const std::string& out_dir) const;

 private:
  std::string command_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
};

}  // namespace asl::cli
