#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lesr/common/error.hpp"
#include "lesr/numerics/tape.hpp"

namespace lesr::num {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool frozen = false;
  bool frozen_touched = false;  // a frozen tensor received gradient (always a bug)
};

struct GradReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double eps = 0.0;

  bool passes(double tol) const {
    for (const auto& p : params)
      if (p.frozen_touched) return false;
    return max_rel_error < tol;
  }
};

// Entries below 1e-6 in magnitude are compared on that absolute scale: an
// exactly-zero gradient would otherwise be judged by pure roundoff.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Compares reverse-mode gradients of `loss` against the fourth-order central
// difference (8(f(p+e) - f(p-e)) - (f(p+2e) - f(p-2e))) / (12e), coordinate by
// coordinate, for every tensor in `params`. Frozen tensors are not probed; the
// report records whether the tape leaked any gradient into them.
//
// `more_steps` lists extra step sizes; each coordinate keeps its best match.
// A smaller step avoids straddling a ReLU kink, a larger one damps roundoff
// on tiny gradients. An incorrect gradient disagrees at every step.
//
// `loss` builds the scalar loss on the tape it is given; it is re-invoked
// with a non-recording tape for each probe.
template <class T>
GradReport grad_check(const std::function<Var(Tape<T>&)>& loss, const std::vector<Tensor<T>*>& params,
                      double eps, const std::vector<double>& more_steps = {}) {
  std::vector<double> steps{eps};
  steps.insert(steps.end(), more_steps.begin(), more_steps.end());
  for (double h : steps)
    if (!(h > 0)) throw ParameterError("grad_check: step sizes must be positive");
  auto eval = [&](const std::string& who) {
    Tape<T> t(false);
    const double v = static_cast<double>(t.scalar(loss(t)));
    if (!std::isfinite(v)) throw DomainError("grad_check: non-finite loss while probing " + who);
    return v;
  };

  Tape<T> tape(true);
  Var l = loss(tape);
  if (!std::isfinite(static_cast<double>(tape.scalar(l))))
    throw DomainError("grad_check: non-finite loss at the probe point");
  tape.backward(l);

  GradReport report;
  report.eps = eps;
  for (Tensor<T>* p : params) {
    ParamCheck pc;
    pc.name = p->name;
    if (!p->trainable()) {
      pc.frozen = true;
      pc.frozen_touched = tape.sink().touched(*p);
      report.params.push_back(pc);
      continue;
    }
    const Mat<T> analytic = tape.sink().dense(*p);
    for (Index i = 0; i < p->values.size(); ++i) {
      T& x = p->values.data()[i];
      const T saved = x;
      const std::string who = p->name + "[" + std::to_string(i) + "]";
      const double a = static_cast<double>(analytic.data()[i]);
      double err = std::numeric_limits<double>::infinity(), numeric = 0.0;
      for (double h : steps) {
        auto at = [&](double k) {
          x = saved + static_cast<T>(k * h);
          return eval(who);
        };
        const double d1 = at(1) - at(-1), d2 = at(2) - at(-2);
        const double n = (8 * d1 - d2) / (12.0 * h);
        if (relative_error(a, n) < err) {
          err = relative_error(a, n);
          numeric = n;
        }
      }
      x = saved;
      if (err > pc.max_rel_error || pc.worst_index < 0) {
        pc.max_rel_error = err;
        pc.worst_index = i;
        pc.worst_analytic = a;
        pc.worst_numeric = numeric;
      }
    }
    if (pc.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = pc.max_rel_error;
      report.worst_param = pc.name;
      report.worst_index = pc.worst_index;
    }
    report.params.push_back(pc);
  }
  return report;
}

}  // namespace lesr::num
