// Randomized checks of invariants that must hold for every input.

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "lesr/corpus/synth.hpp"
#include "lesr/distill/distill.hpp"
#include "lesr/distill/retrieval.hpp"
#include "lesr/dualview/checkpoint.hpp"
#include "lesr/evalkit/metrics.hpp"
#include "lesr/numerics/linalg.hpp"
#include "lesr/trainer/trainer.hpp"

using namespace lesr;
using num::Index;
using num::MatD;
using num::MatF;
using num::RowVec;
using num::Tape;
using semantic::EntityKind;

namespace {

constexpr int kTrials = 25;

MatD random_matrix(Index r, Index c, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("softmax rows are distributions and shift invariant") {
  std::mt19937 rng(1);
  for (int t = 0; t < kTrials; ++t) {
    const MatD x = random_matrix(1 + t % 5, 1 + t % 7, rng, 1.0 + t);
    const MatD p = num::softmax_rows(x);
    CHECK((p.array() >= 0).all());
    for (Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    MatD shifted = x;
    for (Index i = 0; i < x.rows(); ++i) shifted.row(i).array() += 100.0 * static_cast<double>(i + 1);
    CHECK(num::softmax_rows(shifted).isApprox(p, 1e-10));
    CHECK(p.isApprox(oracle::softmax(x), 1e-12));
  }
}

TEST_CASE("pca components are orthonormal with descending variance") {
  std::mt19937 rng(2);
  for (int t = 0; t < kTrials; ++t) {
    const Index n = 8 + t, D = 3 + t % 6, d = 1 + t % D;
    const auto r = num::pca_reduce(random_matrix(n, D, rng), d);
    const MatD gram = r.components * r.components.transpose();
    CHECK(gram.isApprox(MatD::Identity(d, d), 1e-9));
    for (Index k = 1; k < d; ++k) CHECK(r.variance(k) <= r.variance(k - 1) + 1e-12);
    CHECK((r.variance.array() >= -1e-12).all());
    CHECK(r.projection.rows() == n);
    CHECK(r.projection.colwise().mean().norm() < 1e-9);
  }
}

TEST_CASE("metrics are bounded and monotone in rank") {
  double prev_ndcg = 2.0;
  for (Index rank = 1; rank <= 101; ++rank) {
    const auto m = eval::metrics_at_10(rank);
    CHECK(m.ndcg <= m.hit);
    CHECK(m.ndcg >= 0.0);
    CHECK(m.ndcg <= prev_ndcg);
    prev_ndcg = m.ndcg;
  }
  Rng rng(3);
  for (int t = 0; t < kTrials; ++t) {
    const auto n = static_cast<std::size_t>(2 + uniform_index(rng, 120));
    std::vector<corpus::ItemId> ids(n);
    std::vector<float> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = static_cast<corpus::ItemId>(i);
      scores[i] = static_cast<float>(uniform_index(rng, 4));
    }
    std::set<Index> ranks;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = eval::rank_of(ids, scores, i);
      CHECK(r >= 1);
      CHECK(r <= static_cast<Index>(n));
      ranks.insert(r);
    }
    CHECK(ranks.size() == n);  // a strict total order
  }
}

TEST_CASE("negative samples never intersect the history") {
  Rng rng(4);
  for (int t = 0; t < kTrials; ++t) {
    const Index n_items = 20 + static_cast<Index>(uniform_index(rng, 200));
    std::vector<corpus::ItemId> history;
    for (Index k = 0; k < 1 + static_cast<Index>(uniform_index(rng, 60)); ++k)
      history.push_back(static_cast<corpus::ItemId>(uniform_index(rng, static_cast<std::uint64_t>(n_items))));
    const std::set<corpus::ItemId> seen(history.begin(), history.end());
    Index shortfall = 0;
    const auto negs = eval::sample_negatives(history, n_items, 100, rng, &shortfall);
    const std::set<corpus::ItemId> uniq(negs.begin(), negs.end());
    CHECK(uniq.size() == negs.size());
    CHECK(static_cast<Index>(negs.size()) + shortfall == 100);
    CHECK(static_cast<Index>(negs.size()) == std::min<Index>(100, n_items - static_cast<Index>(seen.size())));
    for (auto v : negs) CHECK(seen.count(v) == 0);
    if (static_cast<Index>(seen.size()) < n_items) {
      const auto v = train::sample_negative(history, n_items, rng);
      CHECK(seen.count(v) == 0);
    }
  }
}

TEST_CASE("retrieved sets exclude the query and are ordered by similarity") {
  for (int t = 0; t < 8; ++t) {
    const auto users = oracle::random_table(EntityKind::kUser, 30 + t, 4 + t % 3, 100 + t, t % 2 == 1);
    const Index n = 1 + t % 6;
    const auto index = distill::build_index(users, n);
    for (Index k = 0; k < users.count; ++k) {
      const auto got = distill::retrieve_similar(k, index);
      CHECK(static_cast<Index>(got.size()) == n);
      CHECK(std::set<corpus::UserId>(got.begin(), got.end()).size() == got.size());
      CHECK(std::find(got.begin(), got.end(), k) == got.end());
      for (std::size_t i = 1; i < got.size(); ++i)
        CHECK(distill::cosine(index, k, got[i - 1]) >= distill::cosine(index, k, got[i]));
    }
  }
}

TEST_CASE("distillation loss is a non-negative squared distance") {
  std::mt19937 rng(6);
  for (int t = 0; t < kTrials; ++t) {
    const Index d = 1 + t % 9;
    std::vector<RowVec<double>> s, te;
    for (int b = 0; b < 1 + t % 4; ++b) {
      s.push_back(random_matrix(1, d, rng));
      te.push_back(random_matrix(1, d, rng));
    }
    CHECK(distill::sd_loss<double>(s, te) >= 0.0);
    CHECK(distill::sd_loss<double>(s, s) == 0.0);
    const auto pooled = distill::mean_pool<double>(s);
    for (Index j = 0; j < d; ++j) {
      double lo = 1e300, hi = -1e300;
      for (const auto& v : s) {
        lo = std::min(lo, v(j));
        hi = std::max(hi, v(j));
      }
      CHECK(pooled(j) >= lo - 1e-12);
      CHECK(pooled(j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("corpus snapshots and synthetic generation round trip") {
  oracle::TempDir dir("prop");
  for (int t = 0; t < 6; ++t) {
    const corpus::SynthConfig cfg{.n_users = 40 + 10 * t, .n_items = 30 + 5 * t, .n_clusters = 2 + t % 4};
    const auto d = corpus::synth_generate(cfg, 1000 + static_cast<std::uint64_t>(t));
    d.corpus.validate();
    corpus::write_corpus(d.corpus, dir / "c.bin");
    CHECK(corpus::read_corpus(dir / "c.bin") == d.corpus);
    Index total = 0;
    for (auto p : d.corpus.popularity) total += p;
    Index len = 0;
    for (Index u = 0; u < d.corpus.num_users(); ++u) len += d.corpus.length(u);
    CHECK(total == len);
    const auto tags = corpus::assign_groups(d.corpus);
    CHECK(tags.head_user_count() == corpus::head_count(d.corpus.num_users()));
    CHECK(tags.head_item_count() == corpus::head_count(d.corpus.num_items()));
  }
}

TEST_CASE("model outputs are causal and checkpoints round trip for every variant") {
  oracle::TempDir dir("prop");
  const auto items = oracle::random_table(EntityKind::kItem, 25, 10, 7);
  const train::TrainConfig base{.dim = 6, .max_len = 8, .dropout = 0.0};
  std::uint64_t seed = 1;
  for (const auto& name : train::ablation_names()) {
    for (auto backbone : {enc::EncoderKind::kAttention, enc::EncoderKind::kRecurrent}) {
      CAPTURE(name);
      auto cfg = train::run_ablation(name, base);
      cfg.backbone = backbone;
      const auto m = dual::make_model<float>(items, cfg.model_config(), seed++);
      write_checkpoint(m, dir / "m.ckpt");
      CHECK(dual::bitwise_equal(m, dual::read_checkpoint(dir / "m.ckpt")));

      // Changing the final item leaves earlier per-position states bitwise
      // unchanged in both views.
      std::vector<corpus::ItemId> a{3, 1, 4, 1, 5}, b = a;
      b.back() = 9;
      Tape<float> ta(false), tb(false);
      const auto sa = dual::forward_user(ta, m, std::span<const corpus::ItemId>(a));
      const auto sb = dual::forward_user(tb, m, std::span<const corpus::ItemId>(b));
      for (auto [va, vb] : {std::pair{sa.se_states, sb.se_states}, std::pair{sa.co_states, sb.co_states}}) {
        if (!va) continue;
        const MatF x = ta.value(va), y = tb.value(vb);
        CHECK((x.topRows(4).array() == y.topRows(4).array()).all());
      }
    }
  }
}
