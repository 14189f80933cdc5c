#include "lesr/numerics/tape.hpp"

#include <cmath>
#include <limits>

#include "lesr/common/error.hpp"

namespace lesr::num {

// ---- GradSink ---------------------------------------------------------------

template <class T>
typename GradSink<T>::Entry& GradSink<T>::entry(const Tensor<T>* p) {
  for (auto& e : entries_)
    if (e.param == p) return e;
  entries_.push_back(Entry{p, {}, {}});
  return entries_.back();
}

template <class T>
const typename GradSink<T>::Entry* GradSink<T>::find(const Tensor<T>* p) const {
  for (const auto& e : entries_)
    if (e.param == p) return &e;
  return nullptr;
}

template <class T>
void GradSink<T>::add_dense(const Tensor<T>* p, const Mat<T>& g) {
  auto& e = entry(p);
  if (e.dense.size() == 0)
    e.dense = g;
  else
    e.dense += g;
}

template <class T>
void GradSink<T>::add_row(const Tensor<T>* p, Index row, const Eigen::Ref<const RowVec<T>>& g) {
  entry(p).rows.emplace_back(row, g);
}

template <class T>
void GradSink<T>::flush_into(Tensor<T>& p) const {
  const auto* e = find(&p);
  if (!e) return;
  if (p.grad.rows() != p.values.rows() || p.grad.cols() != p.values.cols())
    p.grad.setZero(p.values.rows(), p.values.cols());
  if (e->dense.size() != 0) p.grad += e->dense;
  for (const auto& [r, g] : e->rows) p.grad.row(r) += g;
}

template <class T>
Mat<T> GradSink<T>::dense(const Tensor<T>& p) const {
  Mat<T> out = Mat<T>::Zero(p.values.rows(), p.values.cols());
  if (const auto* e = find(&p)) {
    if (e->dense.size() != 0) out += e->dense;
    for (const auto& [r, g] : e->rows) out.row(r) += g;
  }
  return out;
}

// ---- Tape plumbing ----------------------------------------------------------

template <class T>
Var Tape<T>::push(M value, bool needs) {
  Node n;
  n.value = std::move(value);
  n.needs = needs && record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
bool Tape<T>::any_needs(std::initializer_list<Var> vs) const {
  if (!record_) return false;
  for (auto v : vs)
    if (nodes_[v.id].needs) return true;
  return false;
}

template <class T>
typename Tape<T>::M& Tape<T>::grad(int id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.get().rows(), n.get().cols());
  return n.grad;
}

template <class T>
void Tape<T>::on_backward(Var out, std::function<void()> fn) {
  if (nodes_[out.id].needs) nodes_[out.id].back = std::move(fn);
}

template <class T>
void Tape<T>::backward(Var loss) {
  const auto& v = value(loss);
  if (v.rows() != 1 || v.cols() != 1) throw ParameterError("backward() requires a scalar loss");
  if (!nodes_[loss.id].needs) return;
  grad(loss.id).setOnes();
  for (int i = loss.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (n.back && n.grad.size() != 0) n.back();
  }
}

// ---- Leaves -----------------------------------------------------------------

template <class T>
Var Tape<T>::constant(M value) {
  return push(std::move(value), false);
}

template <class T>
Var Tape<T>::param(const Tensor<T>& p) {
  Node n;
  n.ref = &p.values;
  n.needs = record_ && p.trainable();
  nodes_.push_back(std::move(n));
  Var out{static_cast<int>(nodes_.size()) - 1};
  on_backward(out, [this, out, pp = &p] { sink_.add_dense(pp, grad_of(out.id)); });
  return out;
}

template <class T>
Var Tape<T>::gather(const Tensor<T>& table, std::span<const Index> rows) {
  M out(static_cast<Index>(rows.size()), table.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= table.values.rows())
      throw ParameterError("row " + std::to_string(rows[i]) + " out of range for " + table.name);
    out.row(static_cast<Index>(i)) = table.values.row(rows[i]);
  }
  Var v = push(std::move(out), table.trainable());
  on_backward(v, [this, v, tp = &table, ids = std::vector<Index>(rows.begin(), rows.end())] {
    const auto& g = grad_of(v.id);
    for (std::size_t i = 0; i < ids.size(); ++i) sink_.add_row(tp, ids[i], g.row(static_cast<Index>(i)));
  });
  return v;
}

// ---- Linear algebra ---------------------------------------------------------

template <class T>
Var Tape<T>::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ParameterError("matmul: inner dimensions differ");
  Var v = push(value(a) * value(b), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    const auto& g = grad_of(v.id);
    if (nodes_[a.id].needs) grad(a.id).noalias() += g * value(b).transpose();
    if (nodes_[b.id].needs) grad(b.id).noalias() += value(a).transpose() * g;
  });
  return v;
}

template <class T>
Var Tape<T>::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw ParameterError("matmul_nt: inner dimensions differ");
  Var v = push(value(a) * value(b).transpose(), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    const auto& g = grad_of(v.id);
    if (nodes_[a.id].needs) grad(a.id).noalias() += g * value(b);
    if (nodes_[b.id].needs) grad(b.id).noalias() += g.transpose() * value(a);
  });
  return v;
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw ParameterError("add: shape mismatch");
  Var v = push(value(a) + value(b), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    if (nodes_[a.id].needs) grad(a.id) += grad_of(v.id);
    if (nodes_[b.id].needs) grad(b.id) += grad_of(v.id);
  });
  return v;
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw ParameterError("sub: shape mismatch");
  Var v = push(value(a) - value(b), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    if (nodes_[a.id].needs) grad(a.id) += grad_of(v.id);
    if (nodes_[b.id].needs) grad(b.id) -= grad_of(v.id);
  });
  return v;
}

template <class T>
Var Tape<T>::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ParameterError("add_row: bias shape mismatch");
  M out = value(a);
  out.rowwise() += value(row).row(0);
  Var v = push(std::move(out), any_needs({a, row}));
  on_backward(v, [this, a, row, v] {
    const auto& g = grad_of(v.id);
    if (nodes_[a.id].needs) grad(a.id) += g;
    if (nodes_[row.id].needs) grad(row.id) += g.colwise().sum();
  });
  return v;
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw ParameterError("mul: shape mismatch");
  Var v = push(value(a).cwiseProduct(value(b)), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    const auto& g = grad_of(v.id);
    if (nodes_[a.id].needs) grad(a.id) += g.cwiseProduct(value(b));
    if (nodes_[b.id].needs) grad(b.id) += g.cwiseProduct(value(a));
  });
  return v;
}

template <class T>
Var Tape<T>::scale(Var a, T s) {
  Var v = push(value(a) * s, any_needs({a}));
  on_backward(v, [this, a, v, s] { grad(a.id) += grad_of(v.id) * s; });
  return v;
}

template <class T>
Var Tape<T>::affine(Var a, T s, T c) {
  M out = (value(a) * s).array() + c;
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v, s] { grad(a.id) += grad_of(v.id) * s; });
  return v;
}

// ---- Pointwise nonlinearities ----------------------------------------------

template <class T>
Var Tape<T>::relu(Var a) {
  Var v = push(value(a).cwiseMax(T(0)), any_needs({a}));
  on_backward(v, [this, a, v] {
    grad(a.id).array() += (value(a).array() > T(0)).select(grad_of(v.id).array(), T(0));
  });
  return v;
}

template <class T>
Var Tape<T>::sigmoid(Var a) {
  M out = value(a).unaryExpr([](T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  });
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v] {
    const auto& y = value(v).array();
    grad(a.id).array() += grad_of(v.id).array() * y * (T(1) - y);
  });
  return v;
}

template <class T>
Var Tape<T>::tanh(Var a) {
  Var v = push(value(a).array().tanh().matrix(), any_needs({a}));
  on_backward(v, [this, a, v] {
    const auto& y = value(v).array();
    grad(a.id).array() += grad_of(v.id).array() * (T(1) - y * y);
  });
  return v;
}

template <class T>
Var Tape<T>::log_sigmoid(Var a) {
  // log σ(x) = min(x, 0) - log1p(exp(-|x|))
  M out = value(a).unaryExpr([](T x) { return std::min(x, T(0)) - std::log1p(std::exp(-std::abs(x))); });
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v] {
    // d/dx log σ(x) = σ(-x)
    M s = value(a).unaryExpr([](T x) {
      if (x <= 0) return T(1) / (T(1) + std::exp(x));
      const T e = std::exp(-x);
      return e / (T(1) + e);
    });
    grad(a.id) += grad_of(v.id).cwiseProduct(s);
  });
  return v;
}

template <class T>
Var Tape<T>::softmax_rows(Var a, bool causal) {
  const M& x = value(a);
  M y = M::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Index width = causal ? std::min<Index>(i + 1, x.cols()) : x.cols();
    auto xr = x.row(i).head(width);
    if (!xr.allFinite()) throw DomainError("softmax_rows: non-finite logit in row " + std::to_string(i));
    const T m = xr.maxCoeff();
    auto yr = y.row(i).head(width);
    yr = (xr.array() - m).exp().matrix();
    yr /= yr.sum();
  }
  Var v = push(std::move(y), any_needs({a}));
  on_backward(v, [this, a, v] {
    const auto& y = value(v);
    const auto& g = grad_of(v.id);
    auto& ga = grad(a.id);
    for (Index i = 0; i < y.rows(); ++i) {
      const T dot = g.row(i).dot(y.row(i));
      ga.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
    }
  });
  return v;
}

template <class T>
Var Tape<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const M& in = value(x);
  const Index n = in.cols();
  if (value(gamma).cols() != n || value(beta).cols() != n) throw ParameterError("layer_norm: shape mismatch");
  M xhat(in.rows(), n);
  std::vector<T> inv_std(static_cast<std::size_t>(in.rows()));
  for (Index i = 0; i < in.rows(); ++i) {
    const T mu = in.row(i).mean();
    const T var = (in.row(i).array() - mu).square().mean();
    inv_std[static_cast<std::size_t>(i)] = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (in.row(i).array() - mu) * inv_std[static_cast<std::size_t>(i)];
  }
  M out = xhat;
  out.array().rowwise() *= value(gamma).row(0).array();
  out.rowwise() += value(beta).row(0);
  Var v = push(std::move(out), any_needs({x, gamma, beta}));
  on_backward(v, [this, x, gamma, beta, v, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
    const auto& g = grad_of(v.id);
    if (nodes_[gamma.id].needs) grad(gamma.id) += g.cwiseProduct(xhat).colwise().sum();
    if (nodes_[beta.id].needs) grad(beta.id) += g.colwise().sum();
    if (nodes_[x.id].needs) {
      auto& gx = grad(x.id);
      const auto& gam = value(gamma);
      for (Index i = 0; i < g.rows(); ++i) {
        RowVec<T> dxhat = g.row(i).cwiseProduct(gam.row(0));
        const T m1 = dxhat.mean();
        const T m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        gx.row(i).array() +=
            inv_std[static_cast<std::size_t>(i)] * (dxhat.array() - m1 - xhat.row(i).array() * m2);
      }
    }
  });
  return v;
}

template <class T>
Var Tape<T>::dropout(Var x, T rate, Rng& rng) {
  if (rate <= T(0)) return x;
  if (rate >= T(1)) throw ParameterError("dropout rate must be below 1");
  const T keep_scale = T(1) / (T(1) - rate);
  M mask(value(x).rows(), value(x).cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) < rate ? T(0) : keep_scale;
  Var v = push(value(x).cwiseProduct(mask), any_needs({x}));
  on_backward(v, [this, x, v, mask = std::move(mask)] { grad(x.id) += grad_of(v.id).cwiseProduct(mask); });
  return v;
}

// ---- Reshaping and reductions ----------------------------------------------

template <class T>
Var Tape<T>::row(Var a, Index i) {
  if (i < 0 || i >= value(a).rows()) throw ParameterError("row index out of range");
  Var v = push(value(a).row(i), any_needs({a}));
  on_backward(v, [this, a, v, i] { grad(a.id).row(i) += grad_of(v.id); });
  return v;
}

template <class T>
Var Tape<T>::take_rows(Var a, std::span<const Index> rows) {
  const M& x = value(a);
  M out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw ParameterError("take_rows: row index out of range");
    out.row(static_cast<Index>(i)) = x.row(rows[i]);
  }
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v, ids = std::vector<Index>(rows.begin(), rows.end())] {
    const auto& g = grad_of(v.id);
    auto& ga = grad(a.id);
    for (std::size_t i = 0; i < ids.size(); ++i) ga.row(ids[i]) += g.row(static_cast<Index>(i));
  });
  return v;
}

template <class T>
Var Tape<T>::rows_dot(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw ParameterError("rows_dot: shape mismatch");
  M out = value(a).cwiseProduct(value(b)).rowwise().sum();
  Var v = push(std::move(out), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    const auto& g = grad_of(v.id);
    if (nodes_[a.id].needs) grad(a.id).array() += value(b).array().colwise() * g.col(0).array();
    if (nodes_[b.id].needs) grad(b.id).array() += value(a).array().colwise() * g.col(0).array();
  });
  return v;
}

template <class T>
Var Tape<T>::concat_cols(Var a, Var b) {
  const M& x = value(a);
  const M& y = value(b);
  if (x.rows() != y.rows()) throw ParameterError("concat_cols: row count mismatch");
  M out(x.rows(), x.cols() + y.cols());
  out << x, y;
  Var v = push(std::move(out), any_needs({a, b}));
  on_backward(v, [this, a, b, v] {
    const auto& g = grad_of(v.id);
    const Index ca = value(a).cols();
    if (nodes_[a.id].needs) grad(a.id) += g.leftCols(ca);
    if (nodes_[b.id].needs) grad(b.id) += g.rightCols(g.cols() - ca);
  });
  return v;
}

template <class T>
Var Tape<T>::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ParameterError("stack_rows: no rows");
  const Index cols = value(rows[0]).cols();
  M out(static_cast<Index>(rows.size()), cols);
  bool needs = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (value(rows[i]).rows() != 1 || value(rows[i]).cols() != cols)
      throw ParameterError("stack_rows: inputs must be 1×C rows of equal width");
    out.row(static_cast<Index>(i)) = value(rows[i]);
    needs = needs || (record_ && nodes_[rows[i].id].needs);
  }
  Var v = push(std::move(out), needs);
  on_backward(v, [this, v, ins = std::vector<Var>(rows.begin(), rows.end())] {
    const auto& g = grad_of(v.id);
    for (std::size_t i = 0; i < ins.size(); ++i)
      if (nodes_[ins[i].id].needs) grad(ins[i].id) += g.row(static_cast<Index>(i));
  });
  return v;
}

template <class T>
Var Tape<T>::sum(Var a) {
  M out(1, 1);
  out(0, 0) = value(a).sum();
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v] { grad(a.id).array() += grad_of(v.id)(0, 0); });
  return v;
}

template <class T>
Var Tape<T>::mean(Var a) {
  const T n = static_cast<T>(value(a).size());
  if (n == T(0)) throw ParameterError("mean of an empty matrix");
  M out(1, 1);
  out(0, 0) = value(a).sum() / n;
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v, n] { grad(a.id).array() += grad_of(v.id)(0, 0) / n; });
  return v;
}

template <class T>
Var Tape<T>::squared_norm(Var a) {
  M out(1, 1);
  out(0, 0) = value(a).squaredNorm();
  Var v = push(std::move(out), any_needs({a}));
  on_backward(v, [this, a, v] { grad(a.id) += value(a) * (T(2) * grad_of(v.id)(0, 0)); });
  return v;
}

template class GradSink<float>;
template class GradSink<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace lesr::num
