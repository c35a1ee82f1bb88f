#include "asl/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "asl/binary_io.hpp"
#include "asl/errors.hpp"

namespace asl::nn {

const char* precision_name(Precision p) { return p == Precision::kFloat32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& name) {
  if (name == "f32" || name == "float32") return Precision::kFloat32;
  if (name == "f64" || name == "float64") return Precision::kFloat64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

namespace {

constexpr std::uint32_t kVersion = 1;

void put_blob(std::ostream& out, const std::vector<double>& v, Precision p) {
  io::put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (double x : v) {
    if (p == Precision::kFloat32)
      io::put_f32(out, static_cast<float>(x));
    else
      io::put_f64(out, x);
  }
}

std::vector<double> get_blob(std::istream& in, Precision p) {
  const std::uint32_t n = io::get_u32(in, "checkpoint tensor");
  std::vector<double> v(n);
  for (double& x : v) x = p == Precision::kFloat32 ? io::get_f32(in, "checkpoint tensor") : io::get_f64(in, "checkpoint tensor");
  return v;
}

}  // namespace

void Checkpoint::write(std::ostream& out) const {
  io::put_tag(out, "ASLC");
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<std::uint32_t>(precision));
  io::put_u32(out, static_cast<std::uint32_t>(spec.channels));
  io::put_u32(out, static_cast<std::uint32_t>(spec.length));
  io::put_u32(out, static_cast<std::uint32_t>(spec.blocks.size()));
  for (const auto& b : spec.blocks) {
    io::put_u32(out, static_cast<std::uint32_t>(b.filters));
    io::put_u32(out, static_cast<std::uint32_t>(b.kernel));
    io::put_u32(out, static_cast<std::uint32_t>(b.pool));
  }
  io::put_u32(out, static_cast<std::uint32_t>(spec.hidden));
  io::put_u32(out, static_cast<std::uint32_t>(spec.outputs));
  io::put_f64(out, spec.dropout);
  io::put_f64(out, sample_rate);
  io::put_u64(out, spec.fingerprint());
  io::put_u64(out, lineage.seed);
  io::put_u64(out, lineage.config_hash);
  io::put_u64(out, lineage.parent_hash);
  io::put_u64(out, lineage.optimizer_steps);
  io::put_u32(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& w : weights) put_blob(out, w, precision);
  if (adam) {
    io::put_tag(out, "ADAM");
    io::put_u64(out, adam->steps);
    for (const auto& m : adam->first) put_blob(out, m, precision);
    for (const auto& v : adam->second) put_blob(out, v, precision);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint Checkpoint::read(std::istream& in) {
  io::expect_tag(in, "ASLC", "checkpoint");
  const std::uint32_t version = io::get_u32(in, "checkpoint header");
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  const std::uint32_t prec = io::get_u32(in, "checkpoint header");
  if (prec != 4 && prec != 8) throw FormatError("checkpoint: unknown precision tag " + std::to_string(prec));
  c.precision = static_cast<Precision>(prec);
  c.spec.channels = io::get_u32(in, "checkpoint topology");
  c.spec.length = io::get_u32(in, "checkpoint topology");
  const std::uint32_t nblocks = io::get_u32(in, "checkpoint topology");
  if (nblocks > 1024) throw FormatError("checkpoint: implausible block count");
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    ConvBlockSpec b;
    b.filters = io::get_u32(in, "checkpoint topology");
    b.kernel = io::get_u32(in, "checkpoint topology");
    b.pool = io::get_u32(in, "checkpoint topology");
    c.spec.blocks.push_back(b);
  }
  c.spec.hidden = io::get_u32(in, "checkpoint topology");
  c.spec.outputs = io::get_u32(in, "checkpoint topology");
  c.spec.dropout = io::get_f64(in, "checkpoint topology");
  c.sample_rate = io::get_f64(in, "checkpoint header");
  const std::uint64_t fingerprint = io::get_u64(in, "checkpoint header");
  if (fingerprint != c.spec.fingerprint()) throw FormatError("checkpoint: topology fingerprint mismatch");
  c.lineage.seed = io::get_u64(in, "checkpoint lineage");
  c.lineage.config_hash = io::get_u64(in, "checkpoint lineage");
  c.lineage.parent_hash = io::get_u64(in, "checkpoint lineage");
  c.lineage.optimizer_steps = io::get_u64(in, "checkpoint lineage");
  const std::uint32_t ntensors = io::get_u32(in, "checkpoint header");
  for (std::uint32_t i = 0; i < ntensors; ++i) c.weights.push_back(get_blob(in, c.precision));
  if (in.peek() != std::char_traits<char>::eof()) {
    io::expect_tag(in, "ADAM", "checkpoint optimizer section");
    AdamState a;
    a.steps = io::get_u64(in, "checkpoint optimizer section");
    for (std::uint32_t i = 0; i < ntensors; ++i) a.first.push_back(get_blob(in, c.precision));
    for (std::uint32_t i = 0; i < ntensors; ++i) a.second.push_back(get_blob(in, c.precision));
    c.adam = std::move(a);
  }
  return c;
}

std::string Checkpoint::serialize() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

std::uint64_t Checkpoint::content_hash() const { return io::fnv1a(serialize()); }

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  write(out);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open checkpoint: " + path);
  return read(in);
}

template <typename T>
Checkpoint make_checkpoint(const Network<T>& net, double sample_rate, const Lineage& lineage, const Adam<T>* adam) {
  Checkpoint c;
  c.spec = net.spec();
  c.precision = sizeof(T) == 4 ? Precision::kFloat32 : Precision::kFloat64;
  c.sample_rate = sample_rate;
  c.lineage = lineage;
  for (const auto& p : net.parameters()) c.weights.emplace_back(p.value.begin(), p.value.end());
  if (adam != nullptr && adam->steps() > 0) {
    AdamState a;
    a.steps = adam->steps();
    for (const auto& m : adam->first_moments()) a.first.emplace_back(m.begin(), m.end());
    for (const auto& v : adam->second_moments()) a.second.emplace_back(v.begin(), v.end());
    c.adam = std::move(a);
  }
  return c;
}

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt) {
  Network<T> net(ckpt.spec);
  auto& params = net.parameters();
  if (params.size() != ckpt.weights.size()) throw FormatError("checkpoint: tensor count does not match topology");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.size() != ckpt.weights[i].size())
      throw FormatError("checkpoint: tensor " + params[i].name + " has the wrong size");
    for (std::size_t j = 0; j < params[i].value.size(); ++j) params[i].value[j] = static_cast<T>(ckpt.weights[i][j]);
  }
  return net;
}

template <typename T>
Adam<T> adam_from_checkpoint(const Checkpoint& ckpt, const AdamHyper& hyper) {
  Adam<T> adam(hyper);
  if (!ckpt.adam) return adam;
  auto convert = [](const std::vector<std::vector<double>>& src) {
    std::vector<std::vector<T>> out;
    for (const auto& s : src) out.emplace_back(s.begin(), s.end());
    return out;
  };
  adam.restore(ckpt.adam->steps, convert(ckpt.adam->first), convert(ckpt.adam->second));
  return adam;
}

template Checkpoint make_checkpoint(const Network<float>&, double, const Lineage&, const Adam<float>*);
template Checkpoint make_checkpoint(const Network<double>&, double, const Lineage&, const Adam<double>*);
template Network<float> network_from_checkpoint<float>(const Checkpoint&);
template Network<double> network_from_checkpoint<double>(const Checkpoint&);
template Adam<float> adam_from_checkpoint<float>(const Checkpoint&, const AdamHyper&);
template Adam<double> adam_from_checkpoint<double>(const Checkpoint&, const AdamHyper&);

}  // namespace asl::nn
