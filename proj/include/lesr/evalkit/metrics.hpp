#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lesr/common/random.hpp"
#include "lesr/corpus/corpus.hpp"
#include "lesr/dualview/model.hpp"

namespace lesr::eval {

using corpus::ItemId;
using corpus::UserId;
using num::Index;

inline constexpr Index kNumNegatives = 100;
inline constexpr Index kCutoff = 10;

struct HitNdcg {
  double hit = 0.0;
  double ndcg = 0.0;
};

// Metrics of a single relevant item at 1-based `rank` among `candidates`.
HitNdcg metrics_at_10(Index rank, Index candidates = kNumNegatives + 1);

// 1 + number of candidates that outrank the one at `target_pos` under
// (score descending, id ascending).
Index rank_of(std::span<const ItemId> candidates, std::span<const float> scores, std::size_t target_pos);

// `count` distinct items outside `history`, drawn without replacement.
// When fewer are available the whole pool is returned and the missing
// amount stored in *shortfall.
std::vector<ItemId> sample_negatives(std::span<const ItemId> history, Index num_items, Index count, Rng& rng,
                                     Index* shortfall = nullptr);

// Scores candidates for a user; candidates[0] is the ground truth.
using Scorer = std::function<std::vector<float>(UserId user, std::span<const ItemId> candidates)>;

inline const std::vector<std::string>& slice_names() {
  static const std::vector<std::string> names{
      "overall",  "tail_item", "head_item", "tail_user", "head_user", "user_g1", "user_g2", "user_g3",
      "user_g4",  "user_g5",   "item_g1",   "item_g2",   "item_g3",   "item_g4", "item_g5"};
  return names;
}

struct SliceMetrics {
  std::string name;
  double h10 = 0.0;
  double n10 = 0.0;
  Index count = 0;
  bool operator==(const SliceMetrics&) const = default;
};

struct UserRecord {
  UserId user = 0;
  ItemId target = 0;
  Index rank = 0;
  double hit = 0.0;
  double ndcg = 0.0;
  Index shortfall = 0;
  bool operator==(const UserRecord&) const = default;
};

struct MetricsReport {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<SliceMetrics> slices;  // in slice_names() order
  std::vector<UserRecord> per_user;

  const SliceMetrics& slice(std::string_view name) const;
  std::string to_json() const;  // stable key order
  static MetricsReport from_json(const std::string& text);
  bool operator==(const MetricsReport&) const = default;
};

// Test-time protocol: per user, the ground truth plus 100 negatives drawn by
// a generator seeded from (seed, user), ranked by `scorer`.
MetricsReport evaluate(const corpus::SplitCorpus& split, Index num_items, const corpus::GroupTags& tags,
                       std::uint64_t seed, const Scorer& scorer, std::size_t workers = 1);

// Same, scoring with the model via the inference path.
MetricsReport evaluate(const dual::DualViewModel<float>& model, const corpus::SplitCorpus& split,
                       const corpus::GroupTags& tags, std::uint64_t seed, std::size_t workers = 1);

// Slice means from per-user records.
std::vector<SliceMetrics> summarize(std::span<const UserRecord> records, const corpus::GroupTags& tags);

void write_report(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

}  // namespace lesr::eval
