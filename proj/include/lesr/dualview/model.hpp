#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/encoders/encoder.hpp"
#include "lesr/semantic/table.hpp"

namespace lesr::dual {

using corpus::ItemId;
using enc::ForwardMode;
using num::Index;
using num::Mat;
using num::RowVec;
using num::Tape;
using num::Tensor;
using num::Var;

enum class InitMode : std::uint8_t { kPca = 0, kRandom = 1 };

InitMode parse_init_mode(std::string_view name);
const char* to_string(InitMode mode);

inline constexpr double kRandomInitStd = 0.02;

// Ablation switches. Defaults are the full model.
struct ModelFlags {
  bool co_view = true;
  bool se_view = true;
  bool share_encoder = true;
  bool cross_attention = true;
  int adapter_layers = 2;  // 2: W2(W1 e + b1) + b2, 1: W e + b
  InitMode init_mode = InitMode::kPca;
  bool residual_fusion = false;  // experimental: S + fused instead of fused
  bool causal_fusion = true;     // query position k attends to keys 0..k only

  bool operator==(const ModelFlags&) const = default;
};

struct ModelConfig {
  Index dim = 64;
  Index max_len = 50;
  enc::EncoderKind backbone = enc::EncoderKind::kAttention;
  double dropout = 0.2;
  ModelFlags flags;

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct AdapterParams {
  int layers = 2;
  Tensor<T> w1, b1;  // two layers: d_llm/2 × d_llm and 1×d_llm/2; one layer: d × d_llm and 1×d
  Tensor<T> w2, b2;  // d × d_llm/2 and 1×d (two layers only)
};

template <class T>
struct CrossAttentionParams {
  Tensor<T> wq, wk, wv;  // d×d, applied as S·W
};

// Parameters of the dual-view model. The semantic table is stored padded to
// an even width (one zero column when the provider dimension is odd) and is
// frozen.
template <class T>
struct DualViewModel {
  ModelConfig config;
  Index llm_dim = 0;  // provider dimension before padding
  std::string collab_provenance;

  Tensor<T> semantic;              // |V| × d_llm (padded), frozen
  AdapterParams<T> adapter;
  Tensor<T> collab;                // |V| × d
  CrossAttentionParams<T> fuse_co;  // query semantic, key/value collaborative
  CrossAttentionParams<T> fuse_se;  // query collaborative, key/value semantic
  enc::EncoderParams<T> encoder;
  enc::EncoderParams<T> encoder_co;  // used only when share_encoder is off

  Index num_items() const { return semantic.values.rows(); }
  Index padded_llm_dim() const { return semantic.values.cols(); }
  // Width of the concatenated user representation [u_se : u_co].
  Index rep_dim() const;

  const enc::EncoderParams<T>& collab_encoder() const {
    return config.flags.share_encoder ? encoder : encoder_co;
  }

  // Every parameter group in a fixed order, the frozen table included.
  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;

  template <class U>
  DualViewModel<U> cast() const;
};

// Shapes only; trainable weights are freshly initialized from `seed`, the
// semantic table is zero and collab is random. Used by checkpoint loading.
template <class T>
DualViewModel<T> make_model_skeleton(const ModelConfig& config, Index num_items, Index llm_dim, std::uint64_t seed);

// Full construction: copies (and freezes) the semantic table, initializes
// the collaborative table by PCA of the semantic table or from N(0, 0.02²).
template <class T>
DualViewModel<T> make_model(const semantic::EmbeddingTable& items, const ModelConfig& config, std::uint64_t seed);

// ---- Differentiable pieces ---------------------------------------------------

template <class T>
Var adapt(Tape<T>& tape, const AdapterParams<T>& adapter, Var e_llm);

// Ŝ_co = softmax(Q Kᵀ/√d) V with Q = S_se Wq, K = S_co Wk, V = S_co Wv using
// `to_co`; Ŝ_se symmetric with `to_se`. Returns {Ŝ_se, Ŝ_co}.
template <class T>
std::pair<Var, Var> cross_fuse(Tape<T>& tape, Var s_se, Var s_co, const CrossAttentionParams<T>& to_co,
                               const CrossAttentionParams<T>& to_se, bool causal);

template <class T>
struct UserStates {
  Var se_states, co_states;  // L×d per view (invalid when the view is off)
  Var u_se, u_co;            // 1×d, last position
};

// Sequences longer than max_len keep their most recent items.
template <class T>
UserStates<T> forward_user(Tape<T>& tape, const DualViewModel<T>& model, std::span<const ItemId> sequence,
                           const ForwardMode& mode = {});

// [u_se : u_co] restricted to the active views.
template <class T>
Var user_representation(Tape<T>& tape, const UserStates<T>& states);

// Scores of items[k] against position rows[k] of the per-position states:
// e_se·h_se + e_co·h_co. Returns a K×1 column.
template <class T>
Var score_positions(Tape<T>& tape, const DualViewModel<T>& model, const UserStates<T>& states,
                    std::span<const Index> rows, std::span<const ItemId> items);

// Mean over pairs of -log σ(s⁺ - s⁻).
template <class T>
Var rank_loss(Tape<T>& tape, Var positive, Var negative);

// ---- Plain evaluation helpers --------------------------------------------------

template <class T>
Mat<T> adapt(const AdapterParams<T>& adapter, const Mat<T>& e_llm);

template <class T>
std::pair<Mat<T>, Mat<T>> cross_fuse(const Mat<T>& s_se, const Mat<T>& s_co, const CrossAttentionParams<T>& to_co,
                                     const CrossAttentionParams<T>& to_se, bool causal);

template <class T>
struct UserVectors {
  RowVec<T> se, co;  // empty when the view is off
};

template <class T>
UserVectors<T> represent(const DualViewModel<T>& model, std::span<const ItemId> sequence);

// Item-side vectors for scoring: adapted semantic rows and collaborative rows.
template <class T>
struct ItemTables {
  Mat<T> semantic;  // |V|×d or empty
  Mat<T> collab;    // |V|×d or empty
};

template <class T>
ItemTables<T> item_tables(const DualViewModel<T>& model);

template <class T>
T score(const UserVectors<T>& user, ItemId item, const ItemTables<T>& items);

template <class T>
T rank_loss(std::span<const T> positive, std::span<const T> negative);

}  // namespace lesr::dual
