#pragma once

// Binary parameter checkpoints.
//
// Layout (little-endian):
//   "LTNW"            4-byte magic
//   version           u32
//   count             u64
//   count times:
//     name length     u32
//     name            UTF-8 bytes
//     rank            u32
//     dims            rank x u64
//     payload         prod(dims) x f64, row-major

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltn/autodiff.hpp"

namespace ltn::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace ltn::ad
