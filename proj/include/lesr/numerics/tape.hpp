#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lesr/common/random.hpp"
#include "lesr/numerics/tensor.hpp"

namespace lesr::num {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  explicit operator bool() const { return id >= 0; }
};

// Gradient contributions collected by one backward pass, keyed by parameter.
// Table lookups contribute sparse rows so that a single sequence never
// materializes a dense gradient for the whole item table.
template <class T>
class GradSink {
 public:
  void add_dense(const Tensor<T>* p, const Mat<T>& g);
  void add_row(const Tensor<T>* p, Index row, const Eigen::Ref<const RowVec<T>>& g);

  // Adds the collected gradient into p.grad (allocating zeros if needed).
  // Contributions are applied in recording order.
  void flush_into(Tensor<T>& p) const;

  // Dense view of the gradient for p; zero matrix if p received nothing.
  Mat<T> dense(const Tensor<T>& p) const;
  bool touched(const Tensor<T>& p) const { return find(&p) != nullptr; }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    const Tensor<T>* param = nullptr;
    Mat<T> dense;
    std::vector<std::pair<Index, RowVec<T>>> rows;
  };
  Entry& entry(const Tensor<T>* p);
  const Entry* find(const Tensor<T>* p) const;

  std::vector<Entry> entries_;
};

// Reverse-mode differentiation over dense row-major matrices.
//
// Every op appends a node holding its forward value. When recording is on
// and any input depends on a trainable parameter, the node also stores a
// closure that propagates its gradient to its inputs. Parameters are read
// by reference, so they must outlive the tape and stay unchanged until
// backward() returns.
template <class T>
class Tape {
 public:
  using M = Mat<T>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(M value);
  // Copy of a's value with no path back to a.
  Var detach(Var a) { return push(value(a), false); }
  Var param(const Tensor<T>& p);
  Var gather(const Tensor<T>& table, std::span<const Index> rows);

  Var matmul(Var a, Var b);     // a·b
  Var matmul_nt(Var a, Var b);  // a·bᵀ
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);  // adds a 1×C row to every row of a
  Var mul(Var a, Var b);        // elementwise
  Var scale(Var a, T s);
  Var affine(Var a, T s, T c);  // s·a + c
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var log_sigmoid(Var a);
  // Row-wise softmax with max subtraction. With causal set, entry (i, j)
  // for j > i is excluded from the normalization and gets weight 0.
  Var softmax_rows(Var a, bool causal = false);
  Var layer_norm(Var x, Var gamma, Var beta, T eps);
  Var dropout(Var x, T rate, Rng& rng);
  Var row(Var a, Index i);
  Var take_rows(Var a, std::span<const Index> rows);
  Var rows_dot(Var a, Var b);  // R×1 of per-row inner products
  Var concat_cols(Var a, Var b);
  Var stack_rows(std::span<const Var> rows);
  Var sum(Var a);
  Var mean(Var a);
  Var squared_norm(Var a);

  const M& value(Var v) const { return nodes_[v.id].get(); }
  T scalar(Var v) const { return value(v)(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs; }

  // Seeds d(loss)/d(loss) = 1 and propagates into sink().
  void backward(Var loss);

  GradSink<T>& sink() { return sink_; }
  const GradSink<T>& sink() const { return sink_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    const M* ref = nullptr;
    M grad;
    bool needs = false;
    std::function<void()> back;
    const M& get() const { return ref ? *ref : value; }
  };

  Var push(M value, bool needs);
  bool any_needs(std::initializer_list<Var> vs) const;
  M& grad(int id);
  const M& grad_of(int id) const { return nodes_[id].grad; }
  void on_backward(Var out, std::function<void()> fn);

  bool record_;
  std::vector<Node> nodes_;
  GradSink<T> sink_;
};

}  // namespace lesr::num
