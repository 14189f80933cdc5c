#include "lesr/encoders/encoder.hpp"

#include <cmath>

#include "lesr/common/error.hpp"

namespace lesr::enc {

namespace {

template <class T>
Tensor<T> filled(std::string name, Index rows, Index cols, T value) {
  return Tensor<T>(std::move(name), Mat<T>::Constant(rows, cols, value));
}

template <class T>
Var maybe_dropout(Tape<T>& tape, Var x, double rate, const ForwardMode& mode) {
  if (!mode.training || !mode.rng || rate <= 0.0) return x;
  return tape.dropout(x, static_cast<T>(rate), *mode.rng);
}

constexpr double kLayerNormEps = 1e-8;

}  // namespace

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "attention" || name == "sasrec") return EncoderKind::kAttention;
  if (name == "recurrent" || name == "gru" || name == "gru4rec") return EncoderKind::kRecurrent;
  throw ParameterError("unknown backbone '" + std::string(name) + "' (expected attention or recurrent)");
}

const char* to_string(EncoderKind kind) { return kind == EncoderKind::kAttention ? "attention" : "recurrent"; }

template <class T>
Tensor<T> xavier(std::string name, Index rows, Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat<T> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * a);
  return Tensor<T>(std::move(name), std::move(m));
}

template <class T>
EncoderParams<T> make_encoder(EncoderKind kind, Index dim, Index max_len, double dropout, Rng& rng,
                              const std::string& prefix) {
  if (dim < 1 || max_len < 1) throw ParameterError("encoder: dim and max_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ParameterError("encoder: dropout must be in [0, 1)");
  EncoderParams<T> p;
  p.kind = kind;
  p.dim = dim;
  p.max_len = max_len;
  p.dropout = dropout;
  if (kind == EncoderKind::kAttention) {
    Mat<T> pos(max_len, dim);
    for (Index i = 0; i < pos.size(); ++i) pos.data()[i] = static_cast<T>(0.02 * standard_normal(rng));
    p.positions = Tensor<T>(prefix + ".positions", std::move(pos));
    for (int l = 0; l < kAttentionLayers; ++l) {
      const auto b = prefix + ".block" + std::to_string(l);
      AttentionBlock<T> blk;
      blk.ln1_gain = filled<T>(b + ".ln1_gain", 1, dim, T(1));
      blk.ln1_bias = filled<T>(b + ".ln1_bias", 1, dim, T(0));
      blk.wq = xavier<T>(b + ".wq", dim, dim, rng);
      blk.wk = xavier<T>(b + ".wk", dim, dim, rng);
      blk.wv = xavier<T>(b + ".wv", dim, dim, rng);
      blk.wo = xavier<T>(b + ".wo", dim, dim, rng);
      blk.ln2_gain = filled<T>(b + ".ln2_gain", 1, dim, T(1));
      blk.ln2_bias = filled<T>(b + ".ln2_bias", 1, dim, T(0));
      blk.ff1_w = xavier<T>(b + ".ff1_w", dim, dim, rng);
      blk.ff1_b = filled<T>(b + ".ff1_b", 1, dim, T(0));
      blk.ff2_w = xavier<T>(b + ".ff2_w", dim, dim, rng);
      blk.ff2_b = filled<T>(b + ".ff2_b", 1, dim, T(0));
      p.blocks.push_back(std::move(blk));
    }
    p.final_gain = filled<T>(prefix + ".final_gain", 1, dim, T(1));
    p.final_bias = filled<T>(prefix + ".final_bias", 1, dim, T(0));
  } else {
    p.wz = xavier<T>(prefix + ".wz", dim, dim, rng);
    p.uz = xavier<T>(prefix + ".uz", dim, dim, rng);
    p.bz = filled<T>(prefix + ".bz", 1, dim, T(0));
    p.wr = xavier<T>(prefix + ".wr", dim, dim, rng);
    p.ur = xavier<T>(prefix + ".ur", dim, dim, rng);
    p.br = filled<T>(prefix + ".br", 1, dim, T(0));
    p.wn = xavier<T>(prefix + ".wn", dim, dim, rng);
    p.un = xavier<T>(prefix + ".un", dim, dim, rng);
    p.bn = filled<T>(prefix + ".bn", 1, dim, T(0));
  }
  return p;
}

template <class T>
std::vector<Tensor<T>*> EncoderParams<T>::parameters() {
  std::vector<Tensor<T>*> out;
  if (kind == EncoderKind::kAttention) {
    out.push_back(&positions);
    for (auto& b : blocks)
      for (auto* t : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_gain, &b.ln2_bias, &b.ff1_w,
                      &b.ff1_b, &b.ff2_w, &b.ff2_b})
        out.push_back(t);
    out.push_back(&final_gain);
    out.push_back(&final_bias);
  } else {
    for (auto* t : {&wz, &uz, &bz, &wr, &ur, &br, &wn, &un, &bn}) out.push_back(t);
  }
  return out;
}

template <class T>
std::vector<const Tensor<T>*> EncoderParams<T>::parameters() const {
  auto ps = const_cast<EncoderParams<T>*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <class T>
template <class U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> p;
  p.kind = kind;
  p.dim = dim;
  p.max_len = max_len;
  p.dropout = dropout;
  p.positions = positions.template cast<U>();
  for (const auto& b : blocks) {
    AttentionBlock<U> c;
    c.ln1_gain = b.ln1_gain.template cast<U>();
    c.ln1_bias = b.ln1_bias.template cast<U>();
    c.wq = b.wq.template cast<U>();
    c.wk = b.wk.template cast<U>();
    c.wv = b.wv.template cast<U>();
    c.wo = b.wo.template cast<U>();
    c.ln2_gain = b.ln2_gain.template cast<U>();
    c.ln2_bias = b.ln2_bias.template cast<U>();
    c.ff1_w = b.ff1_w.template cast<U>();
    c.ff1_b = b.ff1_b.template cast<U>();
    c.ff2_w = b.ff2_w.template cast<U>();
    c.ff2_b = b.ff2_b.template cast<U>();
    p.blocks.push_back(std::move(c));
  }
  p.final_gain = final_gain.template cast<U>();
  p.final_bias = final_bias.template cast<U>();
  p.wz = wz.template cast<U>();
  p.uz = uz.template cast<U>();
  p.bz = bz.template cast<U>();
  p.wr = wr.template cast<U>();
  p.ur = ur.template cast<U>();
  p.br = br.template cast<U>();
  p.wn = wn.template cast<U>();
  p.un = un.template cast<U>();
  p.bn = bn.template cast<U>();
  return p;
}

namespace {

template <class T>
Var attention_states(Tape<T>& tape, const EncoderParams<T>& p, Var x, const ForwardMode& mode) {
  const Index len = tape.value(x).rows();
  std::vector<Index> slots(static_cast<std::size_t>(len));
  for (Index i = 0; i < len; ++i) slots[static_cast<std::size_t>(i)] = p.max_len - len + i;
  Var h = tape.add(x, tape.gather(p.positions, slots));
  h = maybe_dropout(tape, h, p.dropout, mode);

  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(p.dim));
  const T eps = static_cast<T>(kLayerNormEps);
  for (const auto& b : p.blocks) {
    Var a = tape.layer_norm(h, tape.param(b.ln1_gain), tape.param(b.ln1_bias), eps);
    Var q = tape.matmul(a, tape.param(b.wq));
    Var k = tape.matmul(a, tape.param(b.wk));
    Var v = tape.matmul(a, tape.param(b.wv));
    Var w = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt_d), /*causal=*/true);
    Var o = tape.matmul(tape.matmul(w, v), tape.param(b.wo));
    h = tape.add(h, maybe_dropout(tape, o, p.dropout, mode));

    Var c = tape.layer_norm(h, tape.param(b.ln2_gain), tape.param(b.ln2_bias), eps);
    Var f = tape.relu(tape.add_row(tape.matmul(c, tape.param(b.ff1_w)), tape.param(b.ff1_b)));
    f = tape.add_row(tape.matmul(f, tape.param(b.ff2_w)), tape.param(b.ff2_b));
    h = tape.add(h, maybe_dropout(tape, f, p.dropout, mode));
  }
  return tape.layer_norm(h, tape.param(p.final_gain), tape.param(p.final_bias), eps);
}

template <class T>
Var recurrent_states(Tape<T>& tape, const EncoderParams<T>& p, Var x, const ForwardMode& mode) {
  x = maybe_dropout(tape, x, p.dropout, mode);
  const Index len = tape.value(x).rows();
  Var xz = tape.add_row(tape.matmul(x, tape.param(p.wz)), tape.param(p.bz));
  Var xr = tape.add_row(tape.matmul(x, tape.param(p.wr)), tape.param(p.br));
  Var xn = tape.add_row(tape.matmul(x, tape.param(p.wn)), tape.param(p.bn));
  Var uz = tape.param(p.uz), ur = tape.param(p.ur), un = tape.param(p.un);

  std::vector<Var> states;
  states.reserve(static_cast<std::size_t>(len));
  Var h;
  for (Index t = 0; t < len; ++t) {
    Var z, r, n;
    if (!h) {
      z = tape.sigmoid(tape.row(xz, t));
      n = tape.tanh(tape.row(xn, t));
      h = tape.mul(tape.affine(z, T(-1), T(1)), n);
    } else {
      z = tape.sigmoid(tape.add(tape.row(xz, t), tape.matmul(h, uz)));
      r = tape.sigmoid(tape.add(tape.row(xr, t), tape.matmul(h, ur)));
      n = tape.tanh(tape.add(tape.row(xn, t), tape.matmul(tape.mul(r, h), un)));
      h = tape.add(tape.mul(tape.affine(z, T(-1), T(1)), n), tape.mul(z, h));
    }
    states.push_back(h);
  }
  return tape.stack_rows(states);
}

}  // namespace

template <class T>
Var encode_states(Tape<T>& tape, const EncoderParams<T>& params, Var x, const ForwardMode& mode) {
  const auto& xv = tape.value(x);
  if (xv.cols() != params.dim)
    throw ParameterError("encoder: input width " + std::to_string(xv.cols()) + " differs from d = " +
                         std::to_string(params.dim));
  if (xv.rows() < 1) throw ParameterError("encoder: empty sequence");
  if (params.kind == EncoderKind::kAttention) {
    if (xv.rows() > params.max_len)
      throw ParameterError("encoder: sequence longer than max_len; truncate to the most recent items first");
    return attention_states(tape, params, x, mode);
  }
  return recurrent_states(tape, params, x, mode);
}

template <class T>
EncodeResult<T> encode(const SequenceBatch<T>& batch, const EncoderParams<T>& params) {
  if (batch.dim != params.dim) throw ParameterError("encode: batch width differs from encoder width");
  if (batch.embeddings.rows() != batch.size() * batch.max_len || batch.embeddings.cols() != batch.dim)
    throw ParameterError("encode: embeddings shape does not match batch×max_len×d");
  EncodeResult<T> out;
  out.users = Mat<T>::Zero(batch.size(), params.dim);
  for (Index b = 0; b < batch.size(); ++b) {
    const Index len = batch.lengths[static_cast<std::size_t>(b)];
    if (len < 1 || len > batch.max_len) throw ParameterError("encode: invalid sequence length");
    Tape<T> tape(false);
    Var x = tape.constant(batch.embeddings.middleRows(b * batch.max_len, len));
    const auto& states = tape.value(encode_states(tape, params, x));
    Mat<T> padded = Mat<T>::Zero(batch.max_len, params.dim);
    padded.topRows(len) = states;
    out.users.row(b) = states.row(len - 1);
    out.states.push_back(std::move(padded));
  }
  return out;
}

#define LESR_INSTANTIATE(T)                                                                                        \
  template struct EncoderParams<T>;                                                                                \
  template EncoderParams<T> make_encoder<T>(EncoderKind, Index, Index, double, Rng&, const std::string&);         \
  template Var encode_states<T>(Tape<T>&, const EncoderParams<T>&, Var, const ForwardMode&);                      \
  template EncodeResult<T> encode<T>(const SequenceBatch<T>&, const EncoderParams<T>&);                           \
  template Tensor<T> xavier<T>(std::string, Index, Index, Rng&);

LESR_INSTANTIATE(float)
LESR_INSTANTIATE(double)
#undef LESR_INSTANTIATE

template EncoderParams<double> EncoderParams<float>::cast<double>() const;
template EncoderParams<float> EncoderParams<double>::cast<float>() const;
template EncoderParams<float> EncoderParams<float>::cast<float>() const;

}  // namespace lesr::enc
