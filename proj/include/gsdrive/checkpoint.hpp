#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gsdrive/nn.hpp"

namespace gsdrive {

inline constexpr char kCheckpointMagic[9] = "GSNN0001";

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

/// Ordered by name so the on-disk layout is stable.
using TensorMap = std::map<std::string, Tensor>;

void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_checkpoint(const std::filesystem::path& path);

/// Stores each layer as <prefix>/<k>/weight, <prefix>/<k>/bias and
/// <prefix>/<k>/activation (0 = tanh, 1 = linear).
void put_network(TensorMap& tensors, const std::string& prefix, const Network& net);
Network get_network(const TensorMap& tensors, const std::string& prefix);

void put_scalar(TensorMap& tensors, const std::string& name, double value);
double get_scalar(const TensorMap& tensors, const std::string& name);

/// 64-bit values round-trip exactly as two 32-bit halves.
void put_u64(TensorMap& tensors, const std::string& name, std::uint64_t value);
std::uint64_t get_u64(const TensorMap& tensors, const std::string& name);

}  // namespace gsdrive
