#pragma once

#include <span>
#include <vector>

#include "lesr/dualview/model.hpp"

namespace lesr::distill {

using dual::DualViewModel;
using num::Mat;
using num::RowVec;
using num::Tape;
using num::Var;

inline constexpr double kDefaultAlpha = 0.1;

// Mean-pooled [u_se : u_co] of the retrieved users. Always detached.
template <class T>
struct TeacherMediator {
  RowVec<T> se, co;
  bool detached = true;

  RowVec<T> joined() const;
};

// Coordinate-wise mean of equally sized vectors.
template <class T>
RowVec<T> mean_pool(std::span<const RowVec<T>> reps);

// Runs each retrieved sequence through the model with dropout off and
// mean-pools the representations.
template <class T>
TeacherMediator<T> teacher_mediator(const DualViewModel<T>& model,
                                    std::span<const std::span<const corpus::ItemId>> sequences);

// Same computation recorded on `tape`, returned behind a detach so that no
// gradient reaches the teacher path.
template <class T>
Var teacher_mediator(Tape<T>& tape, const DualViewModel<T>& model,
                     std::span<const std::span<const corpus::ItemId>> sequences);

// ‖student - teacher‖² for one user; gradient flows through student only.
template <class T>
Var sd_term(Tape<T>& tape, Var student, const RowVec<T>& teacher);

// Mean over the batch of ‖student_b - teacher_b‖².
template <class T>
Var sd_loss(Tape<T>& tape, std::span<const Var> students, std::span<const Var> teachers);

template <class T>
T sd_loss(std::span<const RowVec<T>> students, std::span<const RowVec<T>> teachers);

// L = L_rank + α·L_sd, α ≥ 0.
double total_loss(double rank_loss, double sd_loss, double alpha);

}  // namespace lesr::distill
