#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lesr/common/random.hpp"
#include "lesr/numerics/tape.hpp"

namespace lesr::enc {

using num::Index;
using num::Mat;
using num::Tape;
using num::Tensor;
using num::Var;

enum class EncoderKind { kAttention, kRecurrent };

EncoderKind parse_encoder_kind(std::string_view name);
const char* to_string(EncoderKind kind);

inline constexpr int kAttentionLayers = 2;
inline constexpr int kRecurrentLayers = 1;

// Dropout is active only when `training` is set and an rng is supplied.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
};

template <class T>
struct AttentionBlock {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> wq, wk, wv, wo;  // d×d, applied as X·W
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;
};

// Shared sequence encoder f_θ.
//
// Attention kind: learned positions (recency-aligned: the newest item always
// takes the last of max_len slots), then two pre-norm single-head causal
// self-attention blocks with position-wise feed-forward layers, then a
// final layer norm.
//
// Recurrent kind: one GRU layer,
//   z = σ(x Wz + h Uz + bz), r = σ(x Wr + h Ur + br),
//   n = tanh(x Wn + (r ⊙ h) Un + bn), h' = (1 - z) ⊙ n + z ⊙ h, h0 = 0.
template <class T>
struct EncoderParams {
  EncoderKind kind = EncoderKind::kAttention;
  Index dim = 0;
  Index max_len = 0;
  double dropout = 0.0;

  Tensor<T> positions;
  std::vector<AttentionBlock<T>> blocks;
  Tensor<T> final_gain, final_bias;

  Tensor<T> wz, uz, bz, wr, ur, br, wn, un, bn;

  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;

  template <class U>
  EncoderParams<U> cast() const;
};

template <class T>
EncoderParams<T> make_encoder(EncoderKind kind, Index dim, Index max_len, double dropout, Rng& rng,
                              const std::string& prefix = "encoder");

// Per-position states (L×d) of an embedded sequence x (L×d, 1 ≤ L ≤ max_len).
// Row k depends only on rows 0..k of x.
template <class T>
Var encode_states(Tape<T>& tape, const EncoderParams<T>& params, Var x, const ForwardMode& mode = {});

// Padded batch: sequence b occupies rows [b·max_len, b·max_len + lengths[b])
// of `embeddings`; the remaining rows of its block are padding and are
// zero-filled by the constructor of callers that follow the convention.
template <class T>
struct SequenceBatch {
  Index max_len = 0;
  Index dim = 0;
  Mat<T> embeddings;  // (batch·max_len)×dim
  std::vector<Index> lengths;

  Index size() const { return static_cast<Index>(lengths.size()); }
  bool valid(Index b, Index pos) const { return pos < lengths[static_cast<std::size_t>(b)]; }
};

template <class T>
struct EncodeResult {
  Mat<T> users;               // batch×d, state at each sequence's last valid position
  std::vector<Mat<T>> states;  // per sequence max_len×d, zero rows at padding
};

// Evaluation-mode encoding of a padded batch.
template <class T>
EncodeResult<T> encode(const SequenceBatch<T>& batch, const EncoderParams<T>& params);

// Xavier-uniform d_in×d_out matrix.
template <class T>
Tensor<T> xavier(std::string name, Index rows, Index cols, Rng& rng);

}  // namespace lesr::enc
