#include "lesr/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "lesr/common/error.hpp"
#include "lesr/common/parallel.hpp"
#include "lesr/distill/distill.hpp"
#include "lesr/evalkit/metrics.hpp"

namespace lesr::train {

using num::Mat;
using num::MatF;
using num::RowVec;
using num::Tape;
using num::Tensor;
using num::Var;

LossKind parse_loss_kind(std::string_view name) {
  if (name == "auto") return LossKind::kAuto;
  if (name == "seq2seq") return LossKind::kSeq2Seq;
  if (name == "seq2one") return LossKind::kSeq2One;
  throw ParameterError("unknown loss kind '" + std::string(name) + "' (expected auto, seq2seq or seq2one)");
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kAuto: return "auto";
    case LossKind::kSeq2Seq: return "seq2seq";
    case LossKind::kSeq2One: return "seq2one";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ParameterError("learning_rate must be positive");
  if (!(alpha >= 0)) throw ParameterError("alpha must be non-negative");
  if (retrieve_n < 1) throw ParameterError("retrieve_n must be positive");
  if (dim < 1 || max_len < 1) throw ParameterError("dim and max_len must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw ParameterError("dropout must lie in [0, 1)");
  if (max_epochs < 1) throw ParameterError("max_epochs must be positive");
  if (patience < 1) throw ParameterError("patience must be at least 1");
  if (max_steps < 0) throw ParameterError("max_steps must be non-negative");
}

LossKind TrainConfig::resolved_loss() const {
  if (loss != LossKind::kAuto) return loss;
  return backbone == enc::EncoderKind::kAttention ? LossKind::kSeq2Seq : LossKind::kSeq2One;
}

dual::ModelConfig TrainConfig::model_config() const {
  dual::ModelConfig m;
  m.dim = dim;
  m.max_len = max_len;
  m.backbone = backbone;
  m.dropout = dropout;
  m.flags = flags;
  return m;
}

std::string describe(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["lr"] = num(c.learning_rate);
  kv["alpha"] = num(c.alpha);
  kv["retrieve_n"] = std::to_string(c.retrieve_n);
  kv["dim"] = std::to_string(c.dim);
  kv["max_len"] = std::to_string(c.max_len);
  kv["dropout"] = num(c.dropout);
  kv["max_epochs"] = std::to_string(c.max_epochs);
  kv["patience"] = std::to_string(c.patience);
  kv["max_steps"] = std::to_string(c.max_steps);
  kv["seed"] = std::to_string(c.seed);
  kv["loss"] = to_string(c.loss);
  kv["backbone"] = enc::to_string(c.backbone);
  kv["co_view"] = c.flags.co_view ? "true" : "false";
  kv["se_view"] = c.flags.se_view ? "true" : "false";
  kv["share_encoder"] = c.flags.share_encoder ? "true" : "false";
  kv["cross_attention"] = c.flags.cross_attention ? "true" : "false";
  kv["adapter_layers"] = std::to_string(c.flags.adapter_layers);
  kv["init"] = dual::to_string(c.flags.init_mode);
  kv["residual_fusion"] = c.flags.residual_fusion ? "true" : "false";
  kv["causal_fusion"] = c.flags.causal_fusion ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

// ---- Negative sampling ----------------------------------------------------------

std::vector<ItemId> sorted_history(std::span<const ItemId> history) {
  std::vector<ItemId> s(history.begin(), history.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

ItemId sample_negative_sorted(std::span<const ItemId> sorted, Index num_items, Rng& rng) {
  if (static_cast<Index>(sorted.size()) >= num_items)
    throw DataError("user has interacted with the entire catalog; no negative available");
  for (;;) {
    const auto v = static_cast<ItemId>(uniform_index(rng, static_cast<std::uint64_t>(num_items)));
    if (!std::binary_search(sorted.begin(), sorted.end(), v)) return v;
  }
}

ItemId sample_negative(std::span<const ItemId> history, Index num_items, Rng& rng) {
  const auto s = sorted_history(history);
  return sample_negative_sorted(s, num_items, rng);
}

// ---- Log ---------------------------------------------------------------------

std::string TrainLog::to_jsonl(bool with_time) const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["steps"] = e.steps;
    j["pairs"] = e.pairs;
    j["rank_loss"] = e.rank_loss;
    j["sd_loss"] = e.sd_loss;
    j["total_loss"] = e.total_loss;
    j["valid_ndcg10"] = e.valid_ndcg;
    j["best"] = e.best;
    if (with_time) j["seconds"] = e.seconds;
    out += j.dump() + "\n";
  }
  return out;
}

bool TrainLog::same_run(const TrainLog& o) const {
  if (epochs.size() != o.epochs.size() || best_epoch != o.best_epoch || best_valid != o.best_valid ||
      steps != o.steps || stopped_early != o.stopped_early)
    return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    auto a = epochs[i];
    auto b = o.epochs[i];
    a.seconds = b.seconds = 0;
    if (!(a == b)) return false;
  }
  return true;
}

// ---- Inference -------------------------------------------------------------------

std::vector<ItemId> rank_candidates(std::span<const ItemId> candidates, std::span<const float> scores) {
  if (candidates.size() != scores.size()) throw ParameterError("rank_candidates: scores and candidates differ in size");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<ItemId> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(candidates[i]);
  return out;
}

namespace {

template <class T>
std::vector<float> score_candidates(const DualViewModel<T>& model, const dual::ItemTables<T>& tables,
                                    std::span<const ItemId> prefix, std::span<const ItemId> candidates) {
  for (auto c : candidates)
    if (c < 0 || c >= model.num_items()) throw DataError("unknown candidate item id " + std::to_string(c));
  const auto user = dual::represent(model, prefix);
  std::vector<float> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scores[i] = static_cast<float>(dual::score(user, candidates[i], tables));
  return scores;
}

}  // namespace

template <class T>
std::vector<ItemId> infer(const DualViewModel<T>& model, const dual::ItemTables<T>& tables,
                          std::span<const ItemId> prefix, std::span<const ItemId> candidates) {
  const auto scores = score_candidates(model, tables, prefix, candidates);
  return rank_candidates(candidates, scores);
}

template std::vector<ItemId> infer<float>(const DualViewModel<float>&, const dual::ItemTables<float>&,
                                          std::span<const ItemId>, std::span<const ItemId>);
template std::vector<ItemId> infer<double>(const DualViewModel<double>&, const dual::ItemTables<double>&,
                                           std::span<const ItemId>, std::span<const ItemId>);

std::vector<std::vector<ItemId>> infer(const DualViewModel<float>& model,
                                       std::span<const std::span<const ItemId>> prefixes,
                                       std::span<const std::vector<ItemId>> candidates, std::size_t workers) {
  if (prefixes.size() != candidates.size()) throw ParameterError("infer: one candidate list per prefix required");
  const auto tables = dual::item_tables(model);
  std::vector<std::vector<ItemId>> out(prefixes.size());
  parallel_for(prefixes.size(), workers,
               [&](std::size_t i) { out[i] = infer(model, tables, prefixes[i], candidates[i]); });
  return out;
}

// ---- Training ----------------------------------------------------------------------

namespace {

struct Adam {
  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;

  float lr;
  long t = 0;
  std::vector<MatF> m{}, v{};

  void step(const std::vector<Tensor<float>*>& params) {
    if (m.empty()) {
      for (auto* p : params) {
        m.push_back(MatF::Zero(p->values.rows(), p->values.cols()));
        v.push_back(MatF::Zero(p->values.rows(), p->values.cols()));
      }
    }
    ++t;
    const float c1 = 1.0f - std::pow(kBeta1, static_cast<float>(t));
    const float c2 = 1.0f - std::pow(kBeta2, static_cast<float>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (!p->trainable() || p->grad.size() == 0) continue;
      m[i] = kBeta1 * m[i] + (1.0f - kBeta1) * p->grad;
      v[i] = kBeta2 * v[i] + (1.0f - kBeta2) * p->grad.cwiseAbs2();
      p->values.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + kEps);
    }
  }
};

// Input/target windows of a training prefix: inputs are train[:-1] and
// targets train[1:], both limited to the most recent max_len positions.
struct Window {
  std::span<const ItemId> input, target;
};

Window window_of(std::span<const ItemId> train, Index max_len) {
  const auto n = static_cast<Index>(train.size());
  const auto keep = std::min(n, max_len + 1);
  auto w = train.last(static_cast<std::size_t>(keep));
  return {w.first(w.size() - 1), w.subspan(1)};
}

struct UserStep {
  num::GradSink<float> sink;
  double rank_sum = 0.0;
  double sd = 0.0;
  Index pairs = 0;
};

double validation_ndcg(const DualViewModel<float>& model, const SplitCorpus& split,
                       const std::vector<std::vector<ItemId>>& candidates, std::size_t workers) {
  const auto tables = dual::item_tables(model);
  std::vector<double> ndcg(static_cast<std::size_t>(split.num_users()));
  parallel_for(ndcg.size(), workers, [&](std::size_t u) {
    const auto& cand = candidates[u];
    const auto user = dual::represent(model, split.valid_prefix(static_cast<UserId>(u)));
    std::vector<float> scores(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) scores[i] = dual::score(user, cand[i], tables);
    ndcg[u] = eval::metrics_at_10(eval::rank_of(cand, scores, 0), static_cast<Index>(cand.size())).ndcg;
  });
  double s = 0.0;
  for (double x : ndcg) s += x;
  return s / static_cast<double>(ndcg.size());
}

}  // namespace

TrainResult train(DualViewModel<float> model, const SplitCorpus& split, const distill::RetrievalSets* retrieval,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const bool use_sd = config.alpha > 0;
  if (use_sd) {
    if (!retrieval) throw ParameterError("self-distillation needs retrieval sets (alpha > 0)");
    if (retrieval->count != split.num_users())
      throw DataError("retrieval sets cover " + std::to_string(retrieval->count) + " users, corpus has " +
                      std::to_string(split.num_users()));
  }
  const Index num_items = model.num_items();
  const bool seq2seq = config.resolved_loss() == LossKind::kSeq2Seq;
  const std::uint64_t frozen_before = model.semantic.checksum();

  std::vector<UserId> users;
  for (UserId u = 0; u < split.num_users(); ++u)
    if (split.train(u).size() >= 2) users.push_back(u);
  if (users.empty()) throw DataError("no user has a training prefix of length 2 or more");

  std::vector<std::vector<ItemId>> histories(static_cast<std::size_t>(split.num_users()));
  std::vector<std::vector<ItemId>> valid_candidates(histories.size());
  for (UserId u = 0; u < split.num_users(); ++u) {
    histories[static_cast<std::size_t>(u)] = sorted_history(split.full(u));
    Rng rng = make_rng(config.seed, "valid_negatives", {static_cast<std::uint64_t>(u)});
    auto& cand = valid_candidates[static_cast<std::size_t>(u)];
    cand.push_back(split.valid_target(u));
    const auto negs = eval::sample_negatives(split.full(u), num_items, eval::kNumNegatives, rng);
    cand.insert(cand.end(), negs.begin(), negs.end());
  }

  auto params = model.parameters();
  Adam adam{.lr = static_cast<float>(config.learning_rate)};
  TrainLog log;
  std::vector<MatF> best;
  Index step = 0;
  bool out_of_steps = false;

  for (Index epoch = 1; epoch <= config.max_epochs && !out_of_steps; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<UserId> order = users;
    Rng shuffle = make_rng(config.seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

    double rank_total = 0.0, sd_total = 0.0;
    Index pairs_total = 0, sd_users = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
      const auto batch = std::span(order).subspan(
          begin, std::min(order.size() - begin, static_cast<std::size_t>(config.batch_size)));
      const Index batch_index = step;

      Index batch_pairs = 0;
      for (auto u : batch) {
        const auto w = window_of(split.train(u), config.max_len);
        batch_pairs += seq2seq ? static_cast<Index>(w.input.size()) : 1;
      }

      std::unordered_map<UserId, RowVec<float>> teacher_reps;
      if (use_sd) {
        std::vector<UserId> need;
        for (auto u : batch)
          for (auto v : retrieval->of(u)) need.push_back(static_cast<UserId>(v));
        std::sort(need.begin(), need.end());
        need.erase(std::unique(need.begin(), need.end()), need.end());
        std::vector<RowVec<float>> reps(need.size());
        parallel_for(need.size(), config.workers, [&](std::size_t i) {
          const auto r = dual::represent(model, split.train(need[i]));
          reps[i].resize(r.se.size() + r.co.size());
          reps[i] << r.se, r.co;
        });
        for (std::size_t i = 0; i < need.size(); ++i) teacher_reps.emplace(need[i], std::move(reps[i]));
      }

      std::vector<UserStep> results(batch.size());
      try {
        parallel_for(batch.size(), config.workers, [&](std::size_t b) {
          const UserId u = batch[b];
          const auto w = window_of(split.train(u), config.max_len);
          const auto key = static_cast<std::uint64_t>(u);
          Rng neg_rng = make_rng(config.seed, "negatives", {static_cast<std::uint64_t>(step), key});
          Rng drop_rng = make_rng(config.seed, "dropout", {static_cast<std::uint64_t>(step), key});

          Tape<float> tape(true);
          auto states = dual::forward_user(tape, model, w.input, {true, &drop_rng});
          const auto L = static_cast<Index>(w.input.size());
          std::vector<Index> rows;
          std::vector<ItemId> pos, neg;
          for (Index k = seq2seq ? 0 : L - 1; k < L; ++k) {
            rows.push_back(k);
            pos.push_back(w.target[static_cast<std::size_t>(k)]);
            neg.push_back(sample_negative_sorted(histories[static_cast<std::size_t>(u)], num_items, neg_rng));
          }
          Var s_pos = dual::score_positions(tape, model, states, rows, pos);
          Var s_neg = dual::score_positions(tape, model, states, rows, neg);
          Var rank_sum = tape.scale(tape.sum(tape.log_sigmoid(tape.sub(s_pos, s_neg))), -1.0f);
          Var loss = tape.scale(rank_sum, 1.0f / static_cast<float>(batch_pairs));

          auto& r = results[b];
          r.rank_sum = tape.scalar(rank_sum);
          r.pairs = static_cast<Index>(rows.size());
          if (use_sd) {
            std::vector<RowVec<float>> pool;
            for (auto v : retrieval->of(u)) pool.push_back(teacher_reps.at(static_cast<UserId>(v)));
            const RowVec<float> teacher = distill::mean_pool<float>(pool);
            Var sd = distill::sd_term(tape, dual::user_representation(tape, states), teacher);
            r.sd = tape.scalar(sd);
            loss = tape.add(loss, tape.scale(sd, static_cast<float>(config.alpha) / static_cast<float>(batch.size())));
          }
          if (!std::isfinite(tape.scalar(loss))) throw DivergenceError("non-finite loss", static_cast<long>(batch_index));
          tape.backward(loss);
          r.sink = std::move(tape.sink());
        });
      } catch (const DomainError& e) {
        throw DivergenceError(std::string("non-finite values at batch ") + std::to_string(batch_index) + ": " + e.what(),
                              static_cast<long>(batch_index));
      }

      double batch_rank = 0.0, batch_sd = 0.0;
      for (auto* p : params)
        if (p->trainable()) p->grad.setZero(p->values.rows(), p->values.cols());
      for (const auto& r : results) {
        batch_rank += r.rank_sum;
        batch_sd += r.sd;
        for (auto* p : params)
          if (p->trainable()) r.sink.flush_into(*p);
      }
      const double batch_loss =
          batch_rank / static_cast<double>(batch_pairs) + config.alpha * batch_sd / static_cast<double>(batch.size());
      if (!std::isfinite(batch_loss))
        throw DivergenceError("non-finite loss at batch " + std::to_string(batch_index), static_cast<long>(batch_index));
      adam.step(params);
      ++step;
      rank_total += batch_rank;
      sd_total += batch_sd;
      pairs_total += batch_pairs;
      sd_users += static_cast<Index>(batch.size());
      if (config.max_steps > 0 && step >= config.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.pairs = pairs_total;
    rec.rank_loss = rank_total / static_cast<double>(pairs_total);
    rec.sd_loss = use_sd ? sd_total / static_cast<double>(sd_users) : 0.0;
    rec.total_loss = rec.rank_loss + config.alpha * rec.sd_loss;
    rec.valid_ndcg = validation_ndcg(model, split, valid_candidates, config.workers);
    if (log.best_epoch < 0 || rec.valid_ndcg > log.best_valid) {
      rec.best = true;
      log.best_epoch = epoch;
      log.best_valid = rec.valid_ndcg;
      best.clear();
      for (auto* p : params) best.push_back(p->values);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    log.steps = step;

    if (epoch - log.best_epoch >= config.patience) {
      log.stopped_early = true;
      break;
    }
    if (on_epoch && !on_epoch(rec)) break;
  }

  for (auto* p : params) p->grad.resize(0, 0);
  DualViewModel<float> last = model;
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->values = best[i];
  if (model.semantic.checksum() != frozen_before) throw std::logic_error("frozen semantic table changed during training");
  return {std::move(model), std::move(last), std::move(log)};
}

}  // namespace lesr::train
