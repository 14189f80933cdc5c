#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lesr/numerics/tensor.hpp"

namespace lesr::corpus {

using num::Index;
using ItemId = Index;
using UserId = Index;
using Attributes = std::map<std::string, std::string>;

// Users, items, and timestamp-ordered interaction sequences with dense ids.
struct Corpus {
  std::vector<std::string> user_keys;  // id -> original key
  std::vector<std::string> item_keys;
  std::vector<std::vector<ItemId>> sequences;    // per user, ascending time
  std::vector<std::vector<double>> timestamps;   // aligned with sequences
  std::vector<Attributes> item_attributes;       // per item, possibly empty
  std::vector<Index> popularity;                 // p_v, derived

  Index num_users() const { return static_cast<Index>(sequences.size()); }
  Index num_items() const { return static_cast<Index>(item_keys.size()); }
  Index length(UserId u) const { return static_cast<Index>(sequences[static_cast<std::size_t>(u)].size()); }
  Index num_interactions() const;

  void recompute_popularity();
  // Throws DataError if any structural invariant is violated.
  void validate() const;

  bool operator==(const Corpus&) const = default;
};

// Reads a tab-separated (user_key, item_key, timestamp) file. A first row
// whose timestamp column is not numeric is treated as a header. Sequences are
// ordered by timestamp with ties kept in file order. `items_path`, when
// non-empty, is a JSON-lines file with an "id" key per object; the remaining
// keys become string attributes.
Corpus load_interactions(const std::filesystem::path& interactions_path,
                         const std::filesystem::path& items_path = {});

// Drops users with fewer than min_len interactions, then items left without
// interactions, and re-densifies ids (relative order preserved).
Corpus preprocess(const Corpus& corpus, Index min_len = 3);

// Keeps the most recent max_len entries.
std::span<const ItemId> most_recent(std::span<const ItemId> seq, Index max_len);

// Leave-one-out view over a corpus: last item is the test target, the
// penultimate the validation target, everything before it the training
// prefix.
class SplitCorpus {
 public:
  explicit SplitCorpus(const Corpus& corpus);

  Index num_users() const { return static_cast<Index>(seqs_.size()); }
  std::span<const ItemId> full(UserId u) const { return seqs_[static_cast<std::size_t>(u)]; }
  std::span<const ItemId> train(UserId u) const { return full(u).first(full(u).size() - 2); }
  std::span<const ItemId> valid_prefix(UserId u) const { return train(u); }
  ItemId valid_target(UserId u) const { return full(u)[full(u).size() - 2]; }
  std::span<const ItemId> test_prefix(UserId u) const { return full(u).first(full(u).size() - 1); }
  ItemId test_target(UserId u) const { return full(u).back(); }

 private:
  std::vector<std::vector<ItemId>> seqs_;
};

SplitCorpus leave_one_out_split(const Corpus& corpus);

inline constexpr std::array<Index, 4> kDefaultUserEdges{5, 10, 15, 20};
inline constexpr std::array<Index, 4> kDefaultItemEdges{10, 20, 30, 40};

struct GroupTags {
  std::vector<bool> user_head;
  std::vector<bool> item_head;
  std::vector<int> user_bucket;  // 0..4
  std::vector<int> item_bucket;

  Index head_user_count() const;
  Index head_item_count() const;
};

// Number of head entities for a population of n: ceil(fraction * n).
Index head_count(Index n, double fraction = 0.2);

// Flags the top ceil(20%) users by n_u and items by p_v as head (ties to the
// lower id). Statistics are taken over full sequences.
GroupTags pareto_split(const Corpus& corpus);

// Bucket index = number of edges ≤ value, so with edges {5,10,15,20}
// n_u ∈ [1,4] lands in bucket 0 and n_u ≥ 20 in bucket 4.
int bucket_of(Index value, std::span<const Index> edges);

// Fills user_bucket/item_bucket of `tags` (allocating flags if empty).
void bucket_groups(const Corpus& corpus, std::span<const Index> user_edges, std::span<const Index> item_edges,
                   GroupTags& tags);

// pareto_split + bucket_groups with the default edges.
GroupTags assign_groups(const Corpus& corpus);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace lesr::corpus
