#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lesr/numerics/tensor.hpp"

namespace lesr::semantic {

enum class EntityKind : std::uint8_t { kItem = 0, kUser = 1 };

const char* to_string(EntityKind kind);

// Frozen LLM-derived vectors, one row per entity id. Used for both the item
// table (E_se) and the semantic user base (U_llm).
struct EmbeddingTable {
  EntityKind kind = EntityKind::kItem;
  num::Index count = 0;
  num::Index dim = 0;
  std::vector<float> values;  // row-major count×dim
  bool frozen = true;

  EmbeddingTable() = default;
  EmbeddingTable(EntityKind k, num::Index n, num::Index d)
      : kind(k), count(n), dim(d), values(static_cast<std::size_t>(n * d), 0.0f) {}

  std::span<const float> row(num::Index i) const {
    return std::span(values).subspan(static_cast<std::size_t>(i * dim), static_cast<std::size_t>(dim));
  }
  std::span<float> row(num::Index i) {
    return std::span(values).subspan(static_cast<std::size_t>(i * dim), static_cast<std::size_t>(dim));
  }

  num::MatF as_matrix() const;
  std::uint64_t checksum() const;

  bool operator==(const EmbeddingTable&) const = default;
};

}  // namespace lesr::semantic
