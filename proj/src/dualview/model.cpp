#include "lesr/dualview/model.hpp"

#include <cmath>

#include "lesr/common/error.hpp"
#include "lesr/semantic/cache.hpp"

namespace lesr::dual {

InitMode parse_init_mode(std::string_view name) {
  if (name == "pca") return InitMode::kPca;
  if (name == "random") return InitMode::kRandom;
  throw ParameterError("unknown init mode '" + std::string(name) + "' (expected pca or random)");
}

const char* to_string(InitMode mode) { return mode == InitMode::kPca ? "pca" : "random"; }

template <class T>
Index DualViewModel<T>::rep_dim() const {
  return config.dim * ((config.flags.se_view ? 1 : 0) + (config.flags.co_view ? 1 : 0));
}

template <class T>
std::vector<Tensor<T>*> DualViewModel<T>::parameters() {
  std::vector<Tensor<T>*> out{&semantic, &adapter.w1, &adapter.b1};
  if (adapter.layers == 2) {
    out.push_back(&adapter.w2);
    out.push_back(&adapter.b2);
  }
  out.push_back(&collab);
  for (auto* t : {&fuse_co.wq, &fuse_co.wk, &fuse_co.wv, &fuse_se.wq, &fuse_se.wk, &fuse_se.wv}) out.push_back(t);
  for (auto* t : encoder.parameters()) out.push_back(t);
  if (!config.flags.share_encoder)
    for (auto* t : encoder_co.parameters()) out.push_back(t);
  return out;
}

template <class T>
std::vector<const Tensor<T>*> DualViewModel<T>::parameters() const {
  auto ps = const_cast<DualViewModel<T>*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <class T>
template <class U>
DualViewModel<U> DualViewModel<T>::cast() const {
  DualViewModel<U> m;
  m.config = config;
  m.llm_dim = llm_dim;
  m.collab_provenance = collab_provenance;
  m.semantic = semantic.template cast<U>();
  m.adapter.layers = adapter.layers;
  m.adapter.w1 = adapter.w1.template cast<U>();
  m.adapter.b1 = adapter.b1.template cast<U>();
  m.adapter.w2 = adapter.w2.template cast<U>();
  m.adapter.b2 = adapter.b2.template cast<U>();
  m.collab = collab.template cast<U>();
  for (auto [dst, src] : {std::pair{&m.fuse_co, &fuse_co}, std::pair{&m.fuse_se, &fuse_se}}) {
    dst->wq = src->wq.template cast<U>();
    dst->wk = src->wk.template cast<U>();
    dst->wv = src->wv.template cast<U>();
  }
  m.encoder = encoder.template cast<U>();
  m.encoder_co = encoder_co.template cast<U>();
  return m;
}

template <class T>
DualViewModel<T> make_model_skeleton(const ModelConfig& config, Index num_items, Index llm_dim, std::uint64_t seed) {
  const auto& f = config.flags;
  if (config.dim < 1 || config.max_len < 1) throw ParameterError("model: dim and max_len must be positive");
  if (num_items < 1 || llm_dim < 1) throw ParameterError("model: empty semantic table");
  if (f.adapter_layers != 1 && f.adapter_layers != 2) throw ParameterError("model: adapter_layers must be 1 or 2");
  if (!f.se_view && !f.co_view) throw ParameterError("model: at least one view must be enabled");

  Rng rng = make_rng(seed, "init");
  DualViewModel<T> m;
  m.config = config;
  m.llm_dim = llm_dim;
  const Index padded = llm_dim + (llm_dim % 2);
  m.semantic = Tensor<T>("semantic", Mat<T>::Zero(num_items, padded), /*trainable=*/false);

  const Index d = config.dim;
  m.adapter.layers = f.adapter_layers;
  if (f.adapter_layers == 2) {
    const Index hidden = padded / 2;
    m.adapter.w1 = enc::xavier<T>("adapter.w1", hidden, padded, rng);
    m.adapter.b1 = Tensor<T>("adapter.b1", Mat<T>::Zero(1, hidden));
    m.adapter.w2 = enc::xavier<T>("adapter.w2", d, hidden, rng);
    m.adapter.b2 = Tensor<T>("adapter.b2", Mat<T>::Zero(1, d));
  } else {
    m.adapter.w1 = enc::xavier<T>("adapter.w1", d, padded, rng);
    m.adapter.b1 = Tensor<T>("adapter.b1", Mat<T>::Zero(1, d));
  }

  Mat<T> collab(num_items, d);
  for (Index i = 0; i < collab.size(); ++i) collab.data()[i] = static_cast<T>(kRandomInitStd * standard_normal(rng));
  m.collab = Tensor<T>("collab", std::move(collab));
  m.collab_provenance = "random-init";

  m.fuse_co.wq = enc::xavier<T>("fuse_co.wq", d, d, rng);
  m.fuse_co.wk = enc::xavier<T>("fuse_co.wk", d, d, rng);
  m.fuse_co.wv = enc::xavier<T>("fuse_co.wv", d, d, rng);
  m.fuse_se.wq = enc::xavier<T>("fuse_se.wq", d, d, rng);
  m.fuse_se.wk = enc::xavier<T>("fuse_se.wk", d, d, rng);
  m.fuse_se.wv = enc::xavier<T>("fuse_se.wv", d, d, rng);

  m.encoder = enc::make_encoder<T>(config.backbone, d, config.max_len, config.dropout, rng, "encoder");
  if (!f.share_encoder)
    m.encoder_co = enc::make_encoder<T>(config.backbone, d, config.max_len, config.dropout, rng, "encoder_co");
  return m;
}

template <class T>
DualViewModel<T> make_model(const semantic::EmbeddingTable& items, const ModelConfig& config, std::uint64_t seed) {
  auto m = make_model_skeleton<T>(config, items.count, items.dim, seed);
  for (Index i = 0; i < items.count; ++i) {
    auto row = items.row(i);
    for (Index j = 0; j < items.dim; ++j) m.semantic.values(i, j) = static_cast<T>(row[static_cast<std::size_t>(j)]);
  }
  if (config.flags.init_mode == InitMode::kPca) {
    auto init = semantic::init_collab_from_semantic(items, config.dim);
    m.collab.values = init.table.cast<T>();
    m.collab_provenance = init.provenance;
  }
  return m;
}

// ---- Differentiable pieces ---------------------------------------------------

template <class T>
Var adapt(Tape<T>& tape, const AdapterParams<T>& a, Var e_llm) {
  if (tape.value(e_llm).cols() != a.w1.values.cols())
    throw ParameterError("adapt: input width " + std::to_string(tape.value(e_llm).cols()) + " differs from adapter width " +
                         std::to_string(a.w1.values.cols()));
  Var h = tape.add_row(tape.matmul_nt(e_llm, tape.param(a.w1)), tape.param(a.b1));
  if (a.layers == 1) return h;
  return tape.add_row(tape.matmul_nt(h, tape.param(a.w2)), tape.param(a.b2));
}

namespace {

template <class T>
Var attend(Tape<T>& tape, Var query_seq, Var kv_seq, const CrossAttentionParams<T>& p, bool causal) {
  const T scale = T(1) / std::sqrt(static_cast<T>(tape.value(query_seq).cols()));
  Var q = tape.matmul(query_seq, tape.param(p.wq));
  Var k = tape.matmul(kv_seq, tape.param(p.wk));
  Var v = tape.matmul(kv_seq, tape.param(p.wv));
  Var w = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), scale), causal);
  return tape.matmul(w, v);
}

}  // namespace

template <class T>
std::pair<Var, Var> cross_fuse(Tape<T>& tape, Var s_se, Var s_co, const CrossAttentionParams<T>& to_co,
                               const CrossAttentionParams<T>& to_se, bool causal) {
  const auto& a = tape.value(s_se);
  const auto& b = tape.value(s_co);
  if (a.rows() != b.rows()) throw ParameterError("cross_fuse: sequence lengths differ");
  if (a.cols() != b.cols() || a.cols() != to_co.wq.values.rows())
    throw ParameterError("cross_fuse: embedding widths differ");
  Var fused_co = attend(tape, s_se, s_co, to_co, causal);
  Var fused_se = attend(tape, s_co, s_se, to_se, causal);
  return {fused_se, fused_co};
}

template <class T>
UserStates<T> forward_user(Tape<T>& tape, const DualViewModel<T>& m, std::span<const ItemId> sequence,
                           const ForwardMode& mode) {
  if (sequence.empty()) throw ParameterError("forward_user: empty sequence");
  const auto recent = corpus::most_recent(sequence, m.config.max_len);
  std::vector<Index> ids(recent.begin(), recent.end());
  for (auto id : ids)
    if (id < 0 || id >= m.num_items()) throw DataError("unknown item id " + std::to_string(id));

  const auto& f = m.config.flags;
  Var s_se, s_co;
  if (f.se_view) s_se = adapt(tape, m.adapter, tape.gather(m.semantic, ids));
  if (f.co_view) s_co = tape.gather(m.collab, ids);
  if (f.se_view && f.co_view && f.cross_attention) {
    auto [fs, fc] = cross_fuse(tape, s_se, s_co, m.fuse_co, m.fuse_se, f.causal_fusion);
    if (f.residual_fusion) {
      fs = tape.add(s_se, fs);
      fc = tape.add(s_co, fc);
    }
    s_se = fs;
    s_co = fc;
  }

  UserStates<T> out;
  const Index last = static_cast<Index>(ids.size()) - 1;
  if (f.se_view) {
    out.se_states = enc::encode_states(tape, m.encoder, s_se, mode);
    out.u_se = tape.row(out.se_states, last);
  }
  if (f.co_view) {
    out.co_states = enc::encode_states(tape, m.collab_encoder(), s_co, mode);
    out.u_co = tape.row(out.co_states, last);
  }
  return out;
}

template <class T>
Var user_representation(Tape<T>& tape, const UserStates<T>& s) {
  if (s.u_se && s.u_co) return tape.concat_cols(s.u_se, s.u_co);
  return s.u_se ? s.u_se : s.u_co;
}

template <class T>
Var score_positions(Tape<T>& tape, const DualViewModel<T>& m, const UserStates<T>& s, std::span<const Index> rows,
                    std::span<const ItemId> items) {
  if (rows.size() != items.size() || rows.empty()) throw ParameterError("score_positions: rows/items mismatch");
  std::vector<Index> ids(items.begin(), items.end());
  for (auto id : ids)
    if (id < 0 || id >= m.num_items()) throw DataError("unknown item id " + std::to_string(id));
  Var total;
  if (s.se_states) {
    Var e = adapt(tape, m.adapter, tape.gather(m.semantic, ids));
    total = tape.rows_dot(tape.take_rows(s.se_states, rows), e);
  }
  if (s.co_states) {
    Var c = tape.rows_dot(tape.take_rows(s.co_states, rows), tape.gather(m.collab, ids));
    total = total ? tape.add(total, c) : c;
  }
  return total;
}

template <class T>
Var rank_loss(Tape<T>& tape, Var positive, Var negative) {
  if (tape.value(positive).size() == 0) throw ParameterError("rank_loss: empty pair list");
  return tape.scale(tape.mean(tape.log_sigmoid(tape.sub(positive, negative))), T(-1));
}

// ---- Plain helpers -------------------------------------------------------------

template <class T>
Mat<T> adapt(const AdapterParams<T>& adapter, const Mat<T>& e_llm) {
  Tape<T> tape(false);
  return tape.value(adapt(tape, adapter, tape.constant(e_llm)));
}

template <class T>
std::pair<Mat<T>, Mat<T>> cross_fuse(const Mat<T>& s_se, const Mat<T>& s_co, const CrossAttentionParams<T>& to_co,
                                     const CrossAttentionParams<T>& to_se, bool causal) {
  Tape<T> tape(false);
  auto [a, b] = cross_fuse(tape, tape.constant(s_se), tape.constant(s_co), to_co, to_se, causal);
  return {tape.value(a), tape.value(b)};
}

template <class T>
UserVectors<T> represent(const DualViewModel<T>& model, std::span<const ItemId> sequence) {
  Tape<T> tape(false);
  auto s = forward_user(tape, model, sequence);
  UserVectors<T> out;
  if (s.u_se) out.se = tape.value(s.u_se);
  if (s.u_co) out.co = tape.value(s.u_co);
  return out;
}

template <class T>
ItemTables<T> item_tables(const DualViewModel<T>& model) {
  ItemTables<T> t;
  if (model.config.flags.se_view) t.semantic = adapt(model.adapter, model.semantic.values);
  if (model.config.flags.co_view) t.collab = model.collab.values;
  return t;
}

template <class T>
T score(const UserVectors<T>& user, ItemId item, const ItemTables<T>& items) {
  T s = 0;
  if (user.se.size() != 0) s += items.semantic.row(item).dot(user.se);
  if (user.co.size() != 0) s += items.collab.row(item).dot(user.co);
  return s;
}

template <class T>
T rank_loss(std::span<const T> positive, std::span<const T> negative) {
  if (positive.size() != negative.size()) throw ParameterError("rank_loss: unaligned score lists");
  Tape<T> tape(false);
  Mat<T> p(static_cast<Index>(positive.size()), 1), n(static_cast<Index>(negative.size()), 1);
  for (std::size_t i = 0; i < positive.size(); ++i) {
    p(static_cast<Index>(i), 0) = positive[i];
    n(static_cast<Index>(i), 0) = negative[i];
  }
  return tape.scalar(rank_loss(tape, tape.constant(p), tape.constant(n)));
}

#define LESR_INSTANTIATE(T)                                                                                          \
  template struct DualViewModel<T>;                                                                                  \
  template DualViewModel<T> make_model_skeleton<T>(const ModelConfig&, Index, Index, std::uint64_t);                 \
  template DualViewModel<T> make_model<T>(const semantic::EmbeddingTable&, const ModelConfig&, std::uint64_t);       \
  template Var adapt<T>(Tape<T>&, const AdapterParams<T>&, Var);                                                     \
  template std::pair<Var, Var> cross_fuse<T>(Tape<T>&, Var, Var, const CrossAttentionParams<T>&,                     \
                                             const CrossAttentionParams<T>&, bool);                                  \
  template UserStates<T> forward_user<T>(Tape<T>&, const DualViewModel<T>&, std::span<const ItemId>,                 \
                                         const ForwardMode&);                                                        \
  template Var user_representation<T>(Tape<T>&, const UserStates<T>&);                                               \
  template Var score_positions<T>(Tape<T>&, const DualViewModel<T>&, const UserStates<T>&, std::span<const Index>,   \
                                  std::span<const ItemId>);                                                          \
  template Var rank_loss<T>(Tape<T>&, Var, Var);                                                                     \
  template Mat<T> adapt<T>(const AdapterParams<T>&, const Mat<T>&);                                                  \
  template std::pair<Mat<T>, Mat<T>> cross_fuse<T>(const Mat<T>&, const Mat<T>&, const CrossAttentionParams<T>&,     \
                                                   const CrossAttentionParams<T>&, bool);                            \
  template UserVectors<T> represent<T>(const DualViewModel<T>&, std::span<const ItemId>);                            \
  template ItemTables<T> item_tables<T>(const DualViewModel<T>&);                                                    \
  template T score<T>(const UserVectors<T>&, ItemId, const ItemTables<T>&);                                          \
  template T rank_loss<T>(std::span<const T>, std::span<const T>);

LESR_INSTANTIATE(float)
LESR_INSTANTIATE(double)
#undef LESR_INSTANTIATE

template DualViewModel<double> DualViewModel<float>::cast<double>() const;
template DualViewModel<float> DualViewModel<double>::cast<float>() const;
template DualViewModel<float> DualViewModel<float>::cast<float>() const;

}  // namespace lesr::dual
