#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/distill/retrieval.hpp"
#include "lesr/dualview/model.hpp"

namespace lesr::train {

using corpus::ItemId;
using corpus::SplitCorpus;
using corpus::UserId;
using dual::DualViewModel;
using num::Index;

// seq2seq: one (positive, negative) pair per valid prefix position.
// seq2one: one pair per user, at the final position.
// kAuto picks seq2seq for the attention backbone and seq2one for the
// recurrent one.
enum class LossKind { kAuto, kSeq2Seq, kSeq2One };

LossKind parse_loss_kind(std::string_view name);
const char* to_string(LossKind kind);

struct TrainConfig {
  Index batch_size = 128;
  double learning_rate = 0.001;
  double alpha = 0.1;
  Index retrieve_n = 10;
  Index dim = 64;
  Index max_len = 50;
  double dropout = 0.2;
  Index max_epochs = 200;
  Index patience = 20;
  Index max_steps = 0;  // 0: no step limit
  std::uint64_t seed = 42;
  LossKind loss = LossKind::kAuto;
  enc::EncoderKind backbone = enc::EncoderKind::kAttention;
  dual::ModelFlags flags;
  std::size_t workers = 1;

  void validate() const;
  LossKind resolved_loss() const;
  dual::ModelConfig model_config() const;
  bool operator==(const TrainConfig&) const = default;
};

// Flat key=value rendering, one key per line, sorted by key.
std::string describe(const TrainConfig& config);

// Uniform over items not in `history`. Throws DataError when the user has
// interacted with the entire catalog.
ItemId sample_negative(std::span<const ItemId> history, Index num_items, Rng& rng);

// Sorted, de-duplicated history used by the fast sampler below.
std::vector<ItemId> sorted_history(std::span<const ItemId> history);
ItemId sample_negative_sorted(std::span<const ItemId> sorted, Index num_items, Rng& rng);

struct EpochRecord {
  Index epoch = 0;
  Index steps = 0;  // cumulative optimizer steps
  Index pairs = 0;  // ranking pairs seen this epoch
  double rank_loss = 0.0;
  double sd_loss = 0.0;
  double total_loss = 0.0;
  double valid_ndcg = 0.0;
  bool best = false;
  double seconds = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  Index best_epoch = -1;
  double best_valid = 0.0;
  Index steps = 0;
  bool stopped_early = false;

  // One JSON object per epoch. Wall-clock is written only when asked, so
  // logs of identical runs compare equal byte for byte.
  std::string to_jsonl(bool with_time = true) const;
  // Equality ignoring wall-clock.
  bool same_run(const TrainLog& other) const;
};

struct TrainResult {
  DualViewModel<float> model;  // best-epoch parameters
  DualViewModel<float> last;   // parameters after the final step
  TrainLog log;
};

// Called after every epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Mini-batch training with Adam and early stopping on validation NDCG@10.
// `retrieval` may be null when alpha is 0. The best-epoch parameters are
// restored before returning.
TrainResult train(DualViewModel<float> model, const SplitCorpus& split, const distill::RetrievalSets* retrieval,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Candidates sorted by descending score, ties by ascending id.
std::vector<ItemId> rank_candidates(std::span<const ItemId> candidates, std::span<const float> scores);

template <class T>
std::vector<ItemId> infer(const DualViewModel<T>& model, const dual::ItemTables<T>& tables,
                          std::span<const ItemId> prefix, std::span<const ItemId> candidates);

// Batch form over users; parallel across users.
std::vector<std::vector<ItemId>> infer(const DualViewModel<float>& model,
                                       std::span<const std::span<const ItemId>> prefixes,
                                       std::span<const std::vector<ItemId>> candidates, std::size_t workers = 1);

// ---- Ablations --------------------------------------------------------------

// Ablation variants plus the LLMInit baseline, in reporting order.
const std::vector<std::string>& ablation_names();

// Base config with the one change the variant names.
TrainConfig run_ablation(std::string_view variant, const TrainConfig& base);

}  // namespace lesr::train
