#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lesr/dualview/model.hpp"

namespace lesr::dual {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Canonical key=value rendering of a model config, one key per line.
std::string describe(const ModelConfig& config);
std::uint64_t config_hash(const ModelConfig& config);

// Little-endian layout:
//   "LESRCKPT" | version u32 |
//   config block (dim, max_len, backbone, dropout, flags, llm_dim, items,
//   provenance) | config hash u64 | tensor count u32 |
//   per tensor: name, rows u32, cols u32, rows·cols f32 |
//   fnv1a-64 of everything after the version
// Every parameter group is stored, the frozen table included, so a round
// trip is bit-exact.
std::vector<std::uint8_t> serialize_checkpoint(const DualViewModel<float>& model);
DualViewModel<float> deserialize_checkpoint(std::span<const std::uint8_t> data);

void write_checkpoint(const DualViewModel<float>& model, const std::filesystem::path& path);
DualViewModel<float> read_checkpoint(const std::filesystem::path& path);

// True when every parameter group matches bit for bit.
bool bitwise_equal(const DualViewModel<float>& a, const DualViewModel<float>& b);

}  // namespace lesr::dual
