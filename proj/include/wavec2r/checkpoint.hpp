#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wavec2r/nn.hpp"
#include "wavec2r/tensor.hpp"

namespace wavec2r {

// Binary layout, all integers little-endian:
//   8 bytes   magic "W2RCKPT\0"
//   u32       format version (1)
//   u64 + n   section tag ("stage1" / "stage2")
//   u64       training step count
//   u64 + n   config snapshot text
//   u32       array count, then per array:
//               u64 + n name, u32 rank, rank x u32 dims, numel x f32 values
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string section;
  std::uint64_t step = 0;
  std::string config;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of the parameter values (stored as 32-bit floats on disk).
Checkpoint capture_parameters(const nn::ParameterSet& params, std::string section,
                              std::uint64_t step, std::string config);

/// Copies arrays into `params`; names and shapes must match exactly and the
/// section must equal `expected_section`.
void restore_parameters(nn::ParameterSet& params, const Checkpoint& ckpt,
                        const std::string& expected_section);

}  // namespace wavec2r
