#include "cli.hpp"

#include <map>
#include <optional>
#include <ostream>

#include "CLI11.hpp"

#include "asl/errors.hpp"
#include "commands.hpp"
#include "run_config.hpp"

namespace asl::cli {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> window_ms;
  std::string out;
  bool deterministic = false;
  std::optional<unsigned> workers;
  std::optional<std::size_t> epochs;
  std::string precision;
  // Inputs.
  std::string corpus, dataset, checkpoint, reference, frames, raw, mapping, method, title, average;
  std::vector<std::string> sequences, test_ids, reports;
  std::optional<int> table;
  std::optional<std::uint64_t> epoch;
  bool hide_reference = false;
};

struct Command {
  const char* name;
  const char* help;
};

const Command kCommands[] = {
    {"simulate", "Generate a semi-synthetic dataset cache with contamination statistics"},
    {"train", "Pretrain the network on semi-synthetic windows (corpus or cached dataset)"},
    {"finetune", "Continue training a checkpoint on windows from recorded sequences"},
    {"train-scratch", "Train a fresh network on windows from recorded sequences only"},
    {"eval-cnn", "Localize recorded sequences with a checkpoint and write per-frame reports"},
    {"eval-srp", "Localize recorded sequences with SRP-PHAT and write per-frame reports"},
    {"report", "Build MOTP / relative-improvement tables from per-frame reports"},
    {"convert-annotations", "Convert raw corpus annotations into the normalized ground-truth format"},
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file (run.resolved files are accepted)");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--window-ms", f.window_ms, "Analysis window length in ms (80, 160, 320, ...)");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_flag("--deterministic", f.deterministic, "Single worker everywhere; bitwise reproducible");
  sub->add_option("--workers", f.workers, "Worker threads for example synthesis");
}

void add_specific(const std::string& name, CLI::App* sub, Flags& f) {
  if (name == "simulate" || name == "train") sub->add_option("--corpus", f.corpus, "Corpus manifest (WAV list)");
  if (name == "simulate") sub->add_option("--epoch", f.epoch, "Epoch index whose windows are generated");
  if (name == "train") sub->add_option("--dataset", f.dataset, "Directory with train.asld / validation.asld");
  if (name == "train" || name == "finetune" || name == "train-scratch") {
    sub->add_option("--epochs", f.epochs, "Training passes (fine-tuning passes for finetune)");
    if (name != "finetune") sub->add_option("--precision", f.precision, "f32 or f64");
  }
  if (name == "finetune" || name == "eval-cnn") sub->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  if (name == "finetune" || name == "train-scratch" || name == "eval-cnn" || name == "eval-srp")
    sub->add_option("--sequence", f.sequences, "Sequence manifest (repeatable)");
  if (name == "finetune" || name == "train-scratch")
    sub->add_option("--test-id", f.test_ids, "Sequence id held out for testing (repeatable)");
  if (name == "eval-cnn" || name == "eval-srp") sub->add_option("--method", f.method, "Method tag in report names");
  if (name == "report") {
    sub->add_option("--report", f.reports, "Report file or directory (repeatable)");
    sub->add_option("--table", f.table, "Also print this published table");
    sub->add_option("--reference", f.reference, "Reference constants CSV");
    sub->add_option("--frames", f.frames, "Sequence frame counts CSV for published averages");
    sub->add_option("--title", f.title, "Title line of the measured table");
    sub->add_option("--average", f.average, "Average row: pooled or mean");
    sub->add_flag("--hide-reference", f.hide_reference, "Leave the SRP columns out (still used for dr)");
  }
  if (name == "convert-annotations") {
    sub->add_option("--raw", f.raw, "Raw annotation file");
    sub->add_option("--mapping", f.mapping, "Column mapping JSON");
  }
}

nlohmann::json overrides_from(const Flags& f, const std::string& command) {
  nlohmann::json j = nlohmann::json::object();
  if (f.seed) j["seed"] = *f.seed;
  if (f.window_ms) j["window_ms"] = *f.window_ms;
  if (!f.out.empty()) j["out"] = f.out;
  if (f.deterministic) j["deterministic"] = true;
  if (f.workers) j["workers"] = *f.workers;
  if (f.epochs) j["training"][command == "finetune" ? "finetune_epochs" : "epochs"] = *f.epochs;
  if (!f.precision.empty()) j["training"]["precision"] = f.precision;
  nlohmann::json in = nlohmann::json::object();
  auto set = [&](const char* key, const std::string& v) {
    if (!v.empty()) in[key] = v;
  };
  set("corpus", f.corpus);
  set("dataset", f.dataset);
  set("checkpoint", f.checkpoint);
  set("reference", f.reference);
  set("frames", f.frames);
  set("raw", f.raw);
  set("mapping", f.mapping);
  set("method", f.method);
  set("title", f.title);
  set("average", f.average);
  if (!f.sequences.empty()) in["sequences"] = f.sequences;
  if (!f.test_ids.empty()) in["test_ids"] = f.test_ids;
  if (!f.reports.empty()) in["reports"] = f.reports;
  if (f.table) in["table"] = *f.table;
  if (f.epoch) in["epoch"] = *f.epoch;
  if (f.hide_reference) in["show_reference"] = false;
  if (!in.empty()) j["inputs"] = in;
  return j;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Acoustic source localization: simulation, CNN training, SRP-PHAT baseline and evaluation", "asl"};
  app.require_subcommand(1);
  Flags flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : kCommands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, flags);
    add_specific(c.name, sub, flags);
    subs[c.name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "asl: usage error: " << e.what() << "\n";
    return kConfigError;
  }
  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    RunConfig rc = resolve_run_config(command, flags.config, overrides_from(flags, command));
    run_command(std::move(rc), out);
    return kOk;
  } catch (const ConfigError& e) {
    err << "asl " << command << ": config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingInputError& e) {
    err << "asl " << command << ": missing input: " << e.what() << "\n";
    return kMissingInput;
  } catch (const NumericError& e) {
    err << "asl " << command << ": numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const FormatError& e) {
    err << "asl " << command << ": malformed input: " << e.what() << "\n";
    return kFormatError;
  } catch (const std::invalid_argument& e) {
    err << "asl " << command << ": config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "asl " << command << ": internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace asl::cli
