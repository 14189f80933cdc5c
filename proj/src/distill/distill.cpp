#include "lesr/distill/distill.hpp"

#include "lesr/common/error.hpp"

namespace lesr::distill {

template <class T>
RowVec<T> TeacherMediator<T>::joined() const {
  RowVec<T> out(se.size() + co.size());
  out << se, co;
  return out;
}

template <class T>
RowVec<T> mean_pool(std::span<const RowVec<T>> reps) {
  if (reps.empty()) throw ParameterError("mean_pool: empty set");
  RowVec<T> acc = RowVec<T>::Zero(reps.front().size());
  for (const auto& r : reps) {
    if (r.size() != acc.size()) throw ParameterError("mean_pool: dimension mismatch");
    acc += r;
  }
  return acc / static_cast<T>(reps.size());
}

template <class T>
TeacherMediator<T> teacher_mediator(const DualViewModel<T>& model,
                                    std::span<const std::span<const corpus::ItemId>> sequences) {
  if (sequences.empty()) throw ParameterError("teacher_mediator: empty retrieved set");
  std::vector<RowVec<T>> se, co;
  for (auto seq : sequences) {
    auto v = dual::represent(model, seq);
    if (v.se.size()) se.push_back(std::move(v.se));
    if (v.co.size()) co.push_back(std::move(v.co));
  }
  TeacherMediator<T> t;
  if (!se.empty()) t.se = mean_pool<T>(se);
  if (!co.empty()) t.co = mean_pool<T>(co);
  return t;
}

template <class T>
Var teacher_mediator(Tape<T>& tape, const DualViewModel<T>& model,
                     std::span<const std::span<const corpus::ItemId>> sequences) {
  if (sequences.empty()) throw ParameterError("teacher_mediator: empty retrieved set");
  Var acc;
  for (auto seq : sequences) {
    auto states = dual::forward_user(tape, model, seq);
    Var rep = dual::user_representation(tape, states);
    acc = acc ? tape.add(acc, rep) : rep;
  }
  return tape.detach(tape.scale(acc, T(1) / static_cast<T>(sequences.size())));
}

template <class T>
Var sd_term(Tape<T>& tape, Var student, const RowVec<T>& teacher) {
  if (tape.value(student).rows() != 1 || tape.value(student).cols() != teacher.size())
    throw ParameterError("sd_loss: student has width " + std::to_string(tape.value(student).cols()) +
                         ", teacher " + std::to_string(teacher.size()));
  return tape.squared_norm(tape.sub(student, tape.constant(teacher)));
}

template <class T>
Var sd_loss(Tape<T>& tape, std::span<const Var> students, std::span<const Var> teachers) {
  if (students.empty() || students.size() != teachers.size()) throw ParameterError("sd_loss: unaligned batch");
  Var acc;
  for (std::size_t b = 0; b < students.size(); ++b) {
    const auto& s = tape.value(students[b]);
    const auto& t = tape.value(teachers[b]);
    if (s.rows() != t.rows() || s.cols() != t.cols()) throw ParameterError("sd_loss: dimension mismatch");
    Var d = tape.squared_norm(tape.sub(students[b], teachers[b]));
    acc = acc ? tape.add(acc, d) : d;
  }
  return tape.scale(acc, T(1) / static_cast<T>(students.size()));
}

template <class T>
T sd_loss(std::span<const RowVec<T>> students, std::span<const RowVec<T>> teachers) {
  if (students.empty() || students.size() != teachers.size()) throw ParameterError("sd_loss: unaligned batch");
  T acc = 0;
  for (std::size_t b = 0; b < students.size(); ++b) {
    if (students[b].size() != teachers[b].size()) throw ParameterError("sd_loss: dimension mismatch");
    acc += (students[b] - teachers[b]).squaredNorm();
  }
  return acc / static_cast<T>(students.size());
}

double total_loss(double rank_loss, double sd_loss, double alpha) {
  if (!(alpha >= 0)) throw ParameterError("alpha must be non-negative");
  return rank_loss + alpha * sd_loss;
}

#define LESR_INSTANTIATE(T)                                                                                      \
  template struct TeacherMediator<T>;                                                                            \
  template RowVec<T> mean_pool<T>(std::span<const RowVec<T>>);                                                   \
  template TeacherMediator<T> teacher_mediator<T>(const DualViewModel<T>&,                                       \
                                                  std::span<const std::span<const corpus::ItemId>>);             \
  template Var teacher_mediator<T>(Tape<T>&, const DualViewModel<T>&,                                            \
                                   std::span<const std::span<const corpus::ItemId>>);                            \
  template Var sd_term<T>(Tape<T>&, Var, const RowVec<T>&);                                                      \
  template Var sd_loss<T>(Tape<T>&, std::span<const Var>, std::span<const Var>);                                 \
  template T sd_loss<T>(std::span<const RowVec<T>>, std::span<const RowVec<T>>);

LESR_INSTANTIATE(float)
LESR_INSTANTIATE(double)
#undef LESR_INSTANTIATE

}  // namespace lesr::distill
