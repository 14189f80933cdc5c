#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/semantic/table.hpp"

namespace lesr::distill {

using corpus::UserId;
using num::Index;

inline constexpr Index kDefaultRetrieveN = 10;
inline constexpr std::uint32_t kRetrievalVersion = 1;

// Exhaustive cosine index over the frozen semantic user base.
struct SimilarUserIndex {
  const semantic::EmbeddingTable* base = nullptr;
  std::vector<double> norms;
  Index n = kDefaultRetrieveN;
};

// Requires 1 ≤ n < number of users.
SimilarUserIndex build_index(const semantic::EmbeddingTable& users, Index n = kDefaultRetrieveN);
// The index borrows `users`; a temporary table would dangle.
SimilarUserIndex build_index(semantic::EmbeddingTable&& users, Index n = kDefaultRetrieveN) = delete;

// Cosine similarity in double precision; 0 when either side has zero norm.
double cosine(const SimilarUserIndex& index, UserId a, UserId b);

// The n users other than k with the highest cosine similarity to k, ties by
// ascending id. Throws DomainError("degenerate user embedding") when k has
// zero norm.
std::vector<UserId> retrieve_similar(UserId k, const SimilarUserIndex& index);

// Retrieved sets for every user, flattened as count × n.
struct RetrievalSets {
  Index count = 0;
  Index n = 0;
  std::vector<std::uint32_t> ids;

  std::span<const std::uint32_t> of(UserId u) const {
    return std::span(ids).subspan(static_cast<std::size_t>(u * n), static_cast<std::size_t>(n));
  }
  bool operator==(const RetrievalSets&) const = default;
};

RetrievalSets retrieve_all(const SimilarUserIndex& index, std::size_t workers = 1);

// Top-n prefix of every list (lists are ordered by similarity).
RetrievalSets truncate(const RetrievalSets& sets, Index n);

// Little-endian layout:
//   "LESRRETR" | version u32 | user count u32 | N u32 | count·N u32 ids |
//   fnv1a-64 of everything after the version
void write_retrieval(const RetrievalSets& sets, const std::filesystem::path& path);
RetrievalSets read_retrieval(const std::filesystem::path& path);

}  // namespace lesr::distill
