#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lesr/common/binary_io.hpp"

namespace lesr::num {

using Index = Eigen::Index;

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using MatD = Mat<double>;

// A named 2-D parameter. Vectors are stored as 1×n rows.
//
// Frozen tensors never receive gradient: the tape skips them when recording
// backward closures, and optimizers skip them when applying updates.
template <class T>
struct Tensor {
  std::string name;
  Mat<T> values;
  Mat<T> grad;  // empty until the first accumulation
  bool requires_grad = true;
  bool frozen = false;

  Tensor() = default;
  Tensor(std::string n, Mat<T> v, bool trainable = true)
      : name(std::move(n)), values(std::move(v)), requires_grad(trainable), frozen(!trainable) {}

  bool trainable() const { return requires_grad && !frozen; }
  std::vector<Index> shape() const { return {values.rows(), values.cols()}; }
  Index size() const { return values.size(); }

  void freeze() {
    frozen = true;
    requires_grad = false;
    grad.resize(0, 0);
  }

  void zero_grad() {
    if (trainable()) grad.setZero(values.rows(), values.cols());
  }

  // FNV-1a over the raw value bytes.
  std::uint64_t checksum() const {
    return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(values.data()),
                           static_cast<std::size_t>(values.size()) * sizeof(T)));
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.name = name;
    out.values = values.template cast<U>();
    out.requires_grad = requires_grad;
    out.frozen = frozen;
    return out;
  }
};

}  // namespace lesr::num
