#include "gsdrive/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gsdrive/error.hpp"

namespace gsdrive {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kFormat, "checkpoint truncated");
  return value;
}

const Tensor& lookup(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorCode::kFormat, "checkpoint lacks tensor " + name);
  return it->second;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(kCheckpointMagic, 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    std::uint64_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.data.size()) throw Error(ErrorCode::kShapeMismatch, "tensor " + name + " dims/data mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

TensorMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw Error(ErrorCode::kVersionMismatch, path.string() + " is not a GSNN0001 checkpoint");
  }
  TensorMap tensors;
  const auto count = take<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(in);
    if (len > 4096) throw Error(ErrorCode::kFormat, "implausible tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    Tensor t;
    const auto ndims = take<std::uint32_t>(in);
    if (ndims > 8) throw Error(ErrorCode::kFormat, "implausible tensor rank");
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.dims.push_back(take<std::uint64_t>(in));
      n *= t.dims.back();
    }
    if (n > (1ull << 32)) throw Error(ErrorCode::kFormat, "implausible tensor size");
    t.data.resize(n);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw Error(ErrorCode::kFormat, "checkpoint truncated in " + name);
    tensors.emplace(std::move(name), std::move(t));
  }
  return tensors;
}

void put_network(TensorMap& tensors, const std::string& prefix, const Network& net) {
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string base = prefix + "/" + std::to_string(k) + "/";
    const auto& l = layers[k];
    Tensor w{{static_cast<std::uint64_t>(l.weight.rows()), static_cast<std::uint64_t>(l.weight.cols())}, {}};
    // Row-major on disk.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.data.push_back(l.weight(r, c));
    }
    tensors[base + "weight"] = std::move(w);
    tensors[base + "bias"] = Tensor{{static_cast<std::uint64_t>(l.bias.size())},
                                    std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())};
    put_scalar(tensors, base + "activation", l.activation == Activation::kTanh ? 0.0 : 1.0);
  }
}

Network get_network(const TensorMap& tensors, const std::string& prefix) {
  std::vector<Layer> layers;
  for (std::size_t k = 0;; ++k) {
    const std::string base = prefix + "/" + std::to_string(k) + "/";
    auto it = tensors.find(base + "weight");
    if (it == tensors.end()) break;
    const Tensor& w = it->second;
    const Tensor& b = lookup(tensors, base + "bias");
    if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
      throw Error(ErrorCode::kFormat, "bad layer shapes under " + base);
    }
    Layer l;
    l.weight.resize(static_cast<Eigen::Index>(w.dims[0]), static_cast<Eigen::Index>(w.dims[1]));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = w.data[i++];
    }
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data.data(), static_cast<Eigen::Index>(b.data.size()));
    l.activation = get_scalar(tensors, base + "activation") == 0.0 ? Activation::kTanh : Activation::kLinear;
    layers.push_back(std::move(l));
  }
  if (layers.empty()) throw Error(ErrorCode::kFormat, "checkpoint lacks network " + prefix);
  return Network(std::move(layers));
}

void put_scalar(TensorMap& tensors, const std::string& name, double value) {
  tensors[name] = Tensor{{1}, {value}};
}

double get_scalar(const TensorMap& tensors, const std::string& name) {
  const Tensor& t = lookup(tensors, name);
  if (t.data.size() != 1) throw Error(ErrorCode::kFormat, name + " is not a scalar");
  return t.data[0];
}

void put_u64(TensorMap& tensors, const std::string& name, std::uint64_t value) {
  tensors[name] = Tensor{{2}, {static_cast<double>(value >> 32), static_cast<double>(value & 0xffffffffu)}};
}

std::uint64_t get_u64(const TensorMap& tensors, const std::string& name) {
  const Tensor& t = lookup(tensors, name);
  if (t.data.size() != 2) throw Error(ErrorCode::kFormat, name + " is not a u64 pair");
  return (static_cast<std::uint64_t>(t.data[0]) << 32) | static_cast<std::uint64_t>(t.data[1]);
}

}  // namespace gsdrive
