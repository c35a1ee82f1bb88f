#include "asl/nn/network_spec.hpp"

#include <sstream>
#include <stdexcept>

#include "asl/binary_io.hpp"

namespace asl::nn {

NetworkSpec NetworkSpec::reference_topology(std::size_t channels, std::size_t length) {
  NetworkSpec s;
  s.channels = channels;
  s.length = length;
  s.blocks = {{96, 7, 7}, {96, 7, 7}, {128, 5, 5}, {128, 5, 5}, {128, 3, 0}};
  s.hidden = 500;
  s.outputs = 3;
  s.dropout = 0.5;
  return s;
}

std::vector<LayerShape> NetworkSpec::shape_chain() const {
  if (channels == 0 || length == 0) throw std::invalid_argument("NetworkSpec: empty input shape");
  if (outputs == 0 || hidden == 0) throw std::invalid_argument("NetworkSpec: empty dense layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("NetworkSpec: dropout must be in [0,1)");
  std::vector<LayerShape> chain{{"input", channels, length}};
  std::size_t c = channels, l = length;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.filters == 0 || b.kernel == 0 || b.kernel % 2 == 0)
      throw std::invalid_argument("NetworkSpec: block " + std::to_string(i + 1) + " needs filters > 0 and an odd kernel");
    c = b.filters;
    chain.push_back({"conv" + std::to_string(i + 1), c, l});
    if (b.pool > 1) {
      if (b.pool > l)
        throw std::invalid_argument("NetworkSpec: pool " + std::to_string(b.pool) + " of block " + std::to_string(i + 1) +
                                    " exceeds length " + std::to_string(l));
      l /= b.pool;
      chain.push_back({"pool" + std::to_string(i + 1), c, l});
    }
  }
  chain.push_back({"flatten", 1, c * l});
  chain.push_back({"dense_hidden", 1, hidden});
  chain.push_back({"output", 1, outputs});
  return chain;
}

std::size_t NetworkSpec::flatten_dim() const {
  const auto chain = shape_chain();
  return chain[chain.size() - 3].length;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0, c = channels;
  for (const auto& b : blocks) {
    n += b.filters * c * b.kernel + b.filters;
    c = b.filters;
  }
  const std::size_t flat = flatten_dim();
  return n + hidden * flat + hidden + outputs * hidden + outputs;
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  for (const auto& s : shape_chain()) os << s.name << " [" << s.channels << " x " << s.length << "]\n";
  return os.str();
}

std::uint64_t NetworkSpec::fingerprint() const {
  std::ostringstream os;
  io::put_u32(os, static_cast<std::uint32_t>(channels));
  io::put_u32(os, static_cast<std::uint32_t>(length));
  io::put_u32(os, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    io::put_u32(os, static_cast<std::uint32_t>(b.filters));
    io::put_u32(os, static_cast<std::uint32_t>(b.kernel));
    io::put_u32(os, static_cast<std::uint32_t>(b.pool));
  }
  io::put_u32(os, static_cast<std::uint32_t>(hidden));
  io::put_u32(os, static_cast<std::uint32_t>(outputs));
  return io::fnv1a(os.str());
}

}  // namespace asl::nn
