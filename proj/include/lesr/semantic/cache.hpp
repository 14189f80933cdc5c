#pragma once

#include <filesystem>
#include <string>

#include "lesr/numerics/tensor.hpp"
#include "lesr/semantic/table.hpp"

namespace lesr::semantic {

inline constexpr std::uint32_t kCacheVersion = 1;

// Little-endian layout:
//   "LESREMB1" | version u32 | kind u8 | count u32 | dim u32 |
//   count·dim f32 | fnv1a-64 of the f32 payload
// Written atomically. Reading fails with FormatError: kBadMagic,
// kBadVersion, kTruncated (file shorter than the header declares),
// kInconsistent (trailing bytes or a bad kind byte), kChecksum.
void write_cache(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable read_cache(const std::filesystem::path& path);

struct CollabInit {
  num::MatF table;  // |V|×d
  std::string provenance;
  bool zero_variance = false;
};

// PCA-reduced copy of the item table used to initialize E_co.
CollabInit init_collab_from_semantic(const EmbeddingTable& items, num::Index d);

}  // namespace lesr::semantic
