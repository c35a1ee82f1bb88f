#include "run_config.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "asl/binary_io.hpp"
#include "asl/errors.hpp"

namespace asl::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kTopKeys = {"command", "out",      "seed",  "window_ms", "deterministic", "workers",
                                        "geometry", "source_box", "noise", "training",  "srp",           "inputs"};
const std::set<std::string> kPathKeys = {"corpus", "dataset", "checkpoint", "reference", "frames", "raw", "mapping"};
const std::set<std::string> kPathListKeys = {"sequences", "reports"};
const std::set<std::string> kInputKeys = {"corpus", "dataset",   "checkpoint", "sequences", "test_ids",
                                          "reports", "reference", "frames",     "table",     "title",
                                          "method",  "average",   "show_reference", "raw",   "mapping", "epoch"};
// Set at the top level only, so the resolved file has one source for each.
const std::set<std::string> kTopLevelOnlyTraining = {"seed", "window_ms", "workers"};

std::string read_text(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError(std::string("cannot open ") + what + ": " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string absolute_from(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

// Makes every path-valued key of an inputs object absolute against `base`.
void absolutize_inputs(nlohmann::json& inputs, const fs::path& base) {
  for (auto& [key, value] : inputs.items()) {
    if (kPathKeys.count(key) && value.is_string()) value = absolute_from(base, value.get<std::string>());
    if (kPathListKeys.count(key) && value.is_array())
      for (auto& v : value)
        if (v.is_string()) v = absolute_from(base, v.get<std::string>());
  }
}

void absolutize(nlohmann::json& doc, const fs::path& base) {
  if (doc.contains("out") && doc["out"].is_string()) doc["out"] = absolute_from(base, doc["out"].get<std::string>());
  if (doc.contains("inputs") && doc["inputs"].is_object()) absolutize_inputs(doc["inputs"], base);
}

void check_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
}

// Objects merge key by key; anything else replaces.
void merge(nlohmann::json& into, const nlohmann::json& from) {
  for (const auto& [key, value] : from.items()) {
    if (value.is_object() && into.contains(key) && into[key].is_object())
      merge(into[key], value);
    else
      into[key] = value;
  }
}

SrpSettings parse_srp(const nlohmann::json& j) {
  check_object(j, "srp config");
  SrpSettings s;
  for (const auto& [key, value] : j.items()) {
    if (key == "resolution") s.resolution = value.get<double>();
    else if (key == "search_z") s.search_z = value.get<bool>();
    else if (key == "all_pairs") s.all_pairs = value.get<bool>();
    else if (key == "upsample") s.options.upsample = value.get<std::size_t>();
    else if (key == "quadratic_interpolation") s.options.quadratic_interpolation = value.get<bool>();
    else if (key == "refine") s.options.refine = value.get<bool>();
    else if (key == "refine_starts") s.options.refine_starts = value.get<std::size_t>();
    else if (key == "refine_iterations") s.options.refine_iterations = value.get<std::size_t>();
    else throw ConfigError("srp config: unknown key '" + key + "'");
  }
  if (!(s.resolution > 0.0)) throw ConfigError("srp config: resolution must be positive");
  if (s.options.upsample == 0) throw ConfigError("srp config: upsample must be at least 1");
  return s;
}

nlohmann::json srp_to_json(const SrpSettings& s) {
  return {{"resolution", s.resolution},
          {"search_z", s.search_z},
          {"all_pairs", s.all_pairs},
          {"upsample", s.options.upsample},
          {"quadratic_interpolation", s.options.quadratic_interpolation},
          {"refine", s.options.refine},
          {"refine_starts", s.options.refine_starts},
          {"refine_iterations", s.options.refine_iterations}};
}

Position parse_position(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + " must be [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

SourceBox parse_box(const nlohmann::json& j) {
  check_object(j, "source_box");
  Position lo = idiap_source_box().lo, hi = idiap_source_box().hi;
  for (const auto& [key, value] : j.items()) {
    if (key == "lo") lo = parse_position(value, "source_box.lo");
    else if (key == "hi") hi = parse_position(value, "source_box.hi");
    else throw ConfigError("source_box: unknown key '" + key + "'");
  }
  try {
    return SourceBox(lo, hi);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("source_box: ") + e.what());
  }
}

Inputs parse_inputs(const nlohmann::json& j) {
  check_object(j, "inputs");
  Inputs in;
  for (const auto& [key, value] : j.items()) {
    if (!kInputKeys.count(key)) throw ConfigError("inputs: unknown key '" + key + "'");
    if (key == "corpus") in.corpus = value.get<std::string>();
    else if (key == "dataset") in.dataset = value.get<std::string>();
    else if (key == "checkpoint") in.checkpoint = value.get<std::string>();
    else if (key == "sequences") in.sequences = value.get<std::vector<std::string>>();
    else if (key == "test_ids") in.test_ids = value.get<std::vector<std::string>>();
    else if (key == "reports") in.reports = value.get<std::vector<std::string>>();
    else if (key == "reference") in.reference = value.get<std::string>();
    else if (key == "frames") in.frames = value.get<std::string>();
    else if (key == "table") in.table = value.get<int>();
    else if (key == "title") in.title = value.get<std::string>();
    else if (key == "method") in.method = value.get<std::string>();
    else if (key == "average") in.average = value.get<std::string>();
    else if (key == "show_reference") in.show_reference = value.get<bool>();
    else if (key == "raw") in.raw = value.get<std::string>();
    else if (key == "mapping") in.mapping = value.get<std::string>();
    else if (key == "epoch") in.epoch = value.get<std::uint64_t>();
  }
  if (in.average != "pooled" && in.average != "mean")
    throw ConfigError("inputs: average must be pooled or mean, got '" + in.average + "'");
  return in;
}

nlohmann::json inputs_to_json(const Inputs& in) {
  return {{"corpus", in.corpus},       {"dataset", in.dataset},   {"checkpoint", in.checkpoint},
          {"sequences", in.sequences}, {"test_ids", in.test_ids}, {"reports", in.reports},
          {"reference", in.reference}, {"frames", in.frames},     {"table", in.table},
          {"title", in.title},         {"method", in.method},     {"average", in.average},
          {"show_reference", in.show_reference}, {"raw", in.raw}, {"mapping", in.mapping},
          {"epoch", in.epoch}};
}

RunConfig from_document(const std::string& command, const nlohmann::json& doc) {
  RunConfig rc;
  rc.command = command;
  IdiapConfig geometry;
  geometry.mic_subset = kIdiapFourMicSubset;
  rc.geometry = geometry;
  rc.source_box = idiap_source_box();
  for (const auto& [key, value] : doc.items()) {
    if (!kTopKeys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    if (key == "command") {
      if (value.get<std::string>() != command)
        throw ConfigError("config was resolved for '" + value.get<std::string>() + "', not '" + command + "'");
    } else if (key == "out") {
      rc.out = value.get<std::string>();
    } else if (key == "seed") {
      rc.seed = value.get<std::uint64_t>();
    } else if (key == "window_ms") {
      rc.window_ms = value.get<double>();
      rc.window_ms_explicit = true;
    } else if (key == "deterministic") {
      rc.deterministic = value.get<bool>();
    } else if (key == "workers") {
      rc.workers = value.get<unsigned>();
    } else if (key == "geometry") {
      check_object(value, "geometry config");
      rc.geometry = geometry_config_from_json_text(value.dump());
      if (!value.contains("mic_subset")) rc.geometry.mic_subset = kIdiapFourMicSubset;
    } else if (key == "source_box") {
      rc.source_box = parse_box(value);
    } else if (key == "noise") {
      check_object(value, "noise config");
      rc.noise = noise_spec_from_json_text(value.dump());
    } else if (key == "training") {
      check_object(value, "training config");
      for (const auto& k : kTopLevelOnlyTraining)
        if (value.contains(k)) throw ConfigError("training config: set '" + k + "' at the top level");
      rc.training = train_config_from_json_text(value.dump());
    } else if (key == "srp") {
      rc.srp = parse_srp(value);
    } else if (key == "inputs") {
      rc.inputs = parse_inputs(value);
    }
  }
  if (rc.workers == 0) throw ConfigError("workers must be at least 1");
  if (rc.deterministic) rc.workers = 1;
  if (!(rc.window_ms > 0.0)) throw ConfigError("window_ms must be positive");
  if (rc.out.empty()) throw ConfigError("no output directory (--out)");
  rc.training.seed = rc.seed;
  rc.training.window_ms = rc.window_ms;
  rc.training.workers = rc.workers;
  return rc;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json training_json = nlohmann::json::parse(train_config_to_json_text(training));
  for (const auto& k : kTopLevelOnlyTraining) training_json.erase(k);
  return {{"command", command},
          {"out", out},
          {"seed", seed},
          {"window_ms", window_ms},
          {"deterministic", deterministic},
          {"workers", workers},
          {"geometry", nlohmann::json::parse(geometry_config_to_json_text(geometry))},
          {"source_box",
           {{"lo", {source_box.lo.x, source_box.lo.y, source_box.lo.z}},
            {"hi", {source_box.hi.x, source_box.hi.y, source_box.hi.z}}}},
          {"noise", nlohmann::json::parse(noise_spec_to_json_text(noise))},
          {"training", training_json},
          {"srp", srp_to_json(srp)},
          {"inputs", inputs_to_json(inputs)}};
}

RunConfig resolve_run_config(const std::string& command, const std::string& config_path,
                             const nlohmann::json& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  try {
    if (!config_path.empty()) {
      const std::string text = read_text(config_path, "config file");
      try {
        doc = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      check_object(doc, config_path);
      absolutize(doc, fs::absolute(config_path).parent_path());
    }
    nlohmann::json flags = overrides;
    absolutize(flags, fs::current_path());
    merge(doc, flags);
    return from_document(command, doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string file_hash(const std::string& path, std::uintmax_t* bytes) {
  const std::string data = read_text(path, "input");
  if (bytes) *bytes = data.size();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a(data)));
  return buf;
}

void RunManifest::add_input(const std::string& role, const std::string& path) {
  std::uintmax_t bytes = 0;
  const std::string hash = file_hash(path, &bytes);
  inputs_.push_back({{"role", role}, {"path", path}, {"bytes", bytes}, {"fnv1a64", hash}});
}

void RunManifest::add_output(const std::string& path) { outputs_.push_back(path); }

void RunManifest::write(const std::string& out_dir) const {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& p : outputs_) {
    std::uintmax_t bytes = 0;
    const std::string hash = file_hash((fs::path(out_dir) / p).string(), &bytes);
    outputs.push_back({{"path", p}, {"bytes", bytes}, {"fnv1a64", hash}});
  }
  const nlohmann::json doc = {{"command", command_}, {"inputs", inputs_}, {"outputs", outputs}};
  std::ofstream f(fs::path(out_dir) / "manifest.json");
  f << doc.dump(2) << '\n';
}

}  // namespace asl::cli
