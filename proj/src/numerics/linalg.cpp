#include "lesr/numerics/linalg.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "lesr/common/error.hpp"
#include "lesr/numerics/tape.hpp"

namespace lesr::num {

template <class T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  if (!logits.allFinite()) throw DomainError("softmax_rows: input contains a non-finite value");
  Tape<T> tape(false);
  return tape.value(tape.softmax_rows(tape.constant(logits)));
}

template MatF softmax_rows(const MatF&);
template MatD softmax_rows(const MatD&);

PcaResult pca_reduce(const MatD& x, Index d) {
  const Index n = x.rows();
  const Index dim = x.cols();
  if (n < 2) throw ParameterError("pca_reduce: need at least two rows");
  if (d < 1 || d > std::min(n, dim))
    throw ParameterError("pca_reduce: target dimension " + std::to_string(d) + " exceeds min(n, D) = " +
                         std::to_string(std::min(n, dim)));
  if (!x.allFinite()) throw DomainError("pca_reduce: input contains a non-finite value");

  PcaResult out;
  out.mean = x.colwise().mean();
  MatD centered = x.rowwise() - out.mean;

  if (centered.cwiseAbs().maxCoeff() == 0.0) {
    out.zero_variance = true;
    out.components = MatD::Identity(d, dim);
    out.projection = MatD::Zero(n, d);
    out.variance = RowVec<double>::Zero(d);
    return out;
  }

  Eigen::BDCSVD<MatD> svd(centered, Eigen::ComputeThinV);
  const auto& v = svd.matrixV();  // dim × min(n, dim)
  out.components.resize(d, dim);
  out.variance.resize(d);
  for (Index k = 0; k < d; ++k) {
    RowVec<double> c = v.col(k).transpose();
    Index arg = 0;
    for (Index j = 1; j < dim; ++j)
      if (std::abs(c(j)) > std::abs(c(arg))) arg = j;
    if (c(arg) < 0) c = -c;
    out.components.row(k) = c;
    const double s = svd.singularValues()(k);
    out.variance(k) = s * s / static_cast<double>(n - 1);
  }
  out.projection = centered * out.components.transpose();
  return out;
}

}  // namespace lesr::num
