// Runs the acceptance criteria AC1..AC9 and prints one PASS/FAIL line each.
//
//   acceptance [--work DIR] [--only AC1,AC5] [--known-failure AC7]
//
// The exit status is non-zero when any criterion fails that is not listed
// as a known failure. Known failures still print FAIL.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "../support/pipeline.hpp"
#include "lesr/cli/app.hpp"
#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/common/parallel.hpp"
#include "lesr/corpus/synth.hpp"
#include "lesr/distill/distill.hpp"
#include "lesr/distill/retrieval.hpp"
#include "lesr/dualview/checkpoint.hpp"
#include "lesr/evalkit/aggregate.hpp"
#include "lesr/evalkit/metrics.hpp"
#include "lesr/numerics/grad_check.hpp"
#include "lesr/numerics/linalg.hpp"
#include "lesr/semantic/cache.hpp"
#include "lesr/trainer/trainer.hpp"

using namespace lesr;
namespace fs = std::filesystem;
using num::Index;
using num::MatD;
using num::MatF;
using num::RowVec;
using num::Tape;
using num::Var;
using semantic::EntityKind;
using corpus::UserId;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

dual::ModelConfig toy_config(enc::EncoderKind backbone) {
  dual::ModelConfig c;
  c.dim = 8;
  c.max_len = 5;
  c.dropout = 0.0;
  c.backbone = backbone;
  return c;
}

// ---- AC1 ---------------------------------------------------------------------------

Outcome ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string where;
  bool frozen_ok = true;
  const auto items = oracle::random_table(EntityKind::kItem, 12, 16, 9);
  for (auto backbone : {enc::EncoderKind::kAttention, enc::EncoderKind::kRecurrent}) {
    for (unsigned seed : {1u, 2u}) {
      auto m = dual::make_model<double>(items, toy_config(backbone), seed);
      const auto users = pipeline::toy_users(12, 4, 5, seed);
      // The teacher is held at its current value, matching the stop-gradient.
      const auto fixed = pipeline::teachers_of(m, users);
      auto loss = [&](Tape<double>& t) { return pipeline::objective(t, m, users, 0.1, &fixed); };
      const auto rep = num::grad_check<double>(loss, m.parameters(), 2e-4, {5e-5, 5e-4});
      for (const auto& p : rep.params) frozen_ok = frozen_ok && !p.frozen_touched;
      if (rep.max_rel_error > worst) {
        worst = rep.max_rel_error;
        where = std::string(enc::to_string(backbone)) + "/" + rep.worst_param;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && frozen_ok && secs < 60,
          fmt("max relative error %.3g (%s), frozen table untouched: %s, %.1fs", worst, where.c_str(),
              frozen_ok ? "yes" : "no", secs)};
}

// ---- AC2 ---------------------------------------------------------------------------

Outcome ac2() {
  const auto data = corpus::synth_generate({}, 42);
  const auto items_before = data.item_embeddings.checksum();
  const auto users_before = data.user_embeddings.checksum();
  const corpus::SplitCorpus split(data.corpus);
  const auto retrieval = distill::retrieve_all(distill::build_index(data.user_embeddings, 10));
  train::TrainConfig cfg;
  cfg.dim = 32;
  cfg.max_steps = 200;
  cfg.max_epochs = 1000;
  cfg.patience = 1000;
  auto model = dual::make_model<float>(data.item_embeddings, cfg.model_config(), cfg.seed);
  const auto table_before = model.semantic.checksum();
  const auto r = train::train(std::move(model), split, &retrieval, cfg);

  // The trained model's frozen table still equals the cache, bit for bit.
  semantic::EmbeddingTable after(EntityKind::kItem, data.item_embeddings.count, data.item_embeddings.dim);
  for (Index i = 0; i < after.count; ++i)
    for (Index j = 0; j < after.dim; ++j) after.row(i)[static_cast<std::size_t>(j)] = r.last.semantic.values(i, j);
  const bool ok = r.log.steps == 200 && r.last.semantic.checksum() == table_before &&
                  r.model.semantic.checksum() == table_before && after.checksum() == items_before &&
                  data.item_embeddings.checksum() == items_before && data.user_embeddings.checksum() == users_before;
  return {ok, fmt("%lld steps; E_se %016llx -> %016llx, U_llm %016llx -> %016llx", static_cast<long long>(r.log.steps),
                  static_cast<unsigned long long>(items_before), static_cast<unsigned long long>(after.checksum()),
                  static_cast<unsigned long long>(users_before),
                  static_cast<unsigned long long>(data.user_embeddings.checksum()))};
}

// ---- AC3 ---------------------------------------------------------------------------

Outcome ac3() {
  const auto items = oracle::random_table(EntityKind::kItem, 20, 16, 3);
  auto cfg = toy_config(enc::EncoderKind::kAttention);
  cfg.dim = 16;
  auto m = dual::make_model<float>(items, cfg, 4);
  const auto users = pipeline::toy_users(20, 4, 5, 8);

  auto grads = [&](bool constant_teacher) {
    Tape<float> t(true);
    std::vector<Var> students, teachers;
    for (const auto& u : users) {
      const auto st = dual::forward_user(t, m, std::span<const corpus::ItemId>(u.input));
      students.push_back(dual::user_representation(t, st));
      std::vector<std::span<const corpus::ItemId>> seqs(u.similar.begin(), u.similar.end());
      const std::span<const std::span<const corpus::ItemId>> view(seqs);
      if (constant_teacher) {
        teachers.push_back(t.constant(distill::teacher_mediator(m, view).joined()));
      } else {
        teachers.push_back(distill::teacher_mediator(t, m, view));
      }
    }
    t.backward(distill::sd_loss(t, std::span<const Var>(students), std::span<const Var>(teachers)));
    std::vector<MatF> out;
    for (auto* p : m.parameters()) out.push_back(t.sink().dense(*p));
    return out;
  };
  const auto a = grads(false), b = grads(true);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() == 0 && b[i].size() == 0) continue;
    worst = std::max(worst, static_cast<double>((a[i] - b[i]).cwiseAbs().maxCoeff()));
    scale = std::max(scale, static_cast<double>(b[i].cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-6 && scale > 0, fmt("max |grad difference| %.3g (largest gradient %.3g)", worst, scale)};
}

// ---- AC4 ---------------------------------------------------------------------------

float hash_score(UserId u, corpus::ItemId v) {
  return static_cast<float>(splitmix64(static_cast<std::uint64_t>(u) * 1000003u + static_cast<std::uint64_t>(v)) >> 40);
}

Outcome ac4() {
  // Brute force on 200 users with heavy score ties.
  const auto small = corpus::synth_generate({.n_users = 200}, 4);
  const corpus::SplitCorpus split(small.corpus);
  const auto tags = corpus::assign_groups(small.corpus);
  auto tied = [](UserId u, std::span<const corpus::ItemId> cand) {
    std::vector<float> s(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) s[i] = static_cast<float>(static_cast<int>(hash_score(u, cand[i])) % 16);
    return s;
  };
  const auto rep = eval::evaluate(split, small.corpus.num_items(), tags, 42, tied);
  Index mismatches = 0;
  double hit = 0, ndcg = 0;
  for (const auto& r : rep.per_user) {
    Rng rng = make_rng(42, "eval_negatives", {static_cast<std::uint64_t>(r.user)});
    std::vector<corpus::ItemId> cand{split.test_target(r.user)};
    const auto negs = eval::sample_negatives(split.full(r.user), small.corpus.num_items(), 100, rng);
    cand.insert(cand.end(), negs.begin(), negs.end());
    const auto rank = oracle::rank_by_sort(std::vector<Index>(cand.begin(), cand.end()), tied(r.user, cand), 0);
    const auto [h, n] = oracle::hit_ndcg_by_list(rank);
    const auto m = eval::metrics_at_10(rank);
    if (r.rank != rank || r.hit != h || r.ndcg != n || m.hit != h || m.ndcg != n) ++mismatches;
    hit += h;
    ndcg += n;
  }
  const bool exact = mismatches == 0 && rep.slice("overall").h10 == hit / 200 && rep.slice("overall").n10 == ndcg / 200;

  const auto big = corpus::synth_generate({.n_users = 2000}, 5);
  const corpus::SplitCorpus split2(big.corpus);
  auto random = [](UserId u, std::span<const corpus::ItemId> cand) {
    std::vector<float> s(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) s[i] = hash_score(u + 7919, cand[i]);
    return s;
  };
  const auto r2 = eval::evaluate(split2, big.corpus.num_items(), corpus::assign_groups(big.corpus), 42, random);
  const double h10 = r2.slice("overall").h10;
  const bool random_ok = std::abs(h10 - 10.0 / 101) <= 0.02;
  return {exact && random_ok,
          fmt("%lld mismatches on 200 users; random scorer H@10 %.4f (target %.4f +- 0.02)",
              static_cast<long long>(mismatches), h10, 10.0 / 101)};
}

// ---- AC5 ---------------------------------------------------------------------------

Outcome ac5() {
  Index checked = 0, mismatches = 0;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const Index n_users = 100 + 100 * static_cast<Index>(seed);  // up to 1,000
    const auto users = oracle::random_table(EntityKind::kUser, n_users, 8, 500 + seed, seed % 2 == 1);
    const auto index = distill::build_index(users, 10);
    const auto all = distill::retrieve_all(index);
    for (Index k = 0; k < n_users; ++k) {
      const auto want = oracle::top_n_cosine(users, k, 10);
      const auto got = all.of(k);
      if (!std::equal(got.begin(), got.end(), want.begin(), want.end(),
                      [](std::uint32_t a, Index b) { return static_cast<Index>(a) == b; }))
        ++mismatches;
      ++checked;
    }
  }
  return {mismatches == 0, fmt("%lld of %lld retrieved lists differ from the exhaustive oracle",
                               static_cast<long long>(mismatches), static_cast<long long>(checked))};
}

// ---- AC6 ---------------------------------------------------------------------------

Outcome ac6() {
  // Score decomposition: concatenated user · concatenated item = sum of views.
  const auto items = oracle::random_table(EntityKind::kItem, 50, 32, 6);
  dual::ModelConfig cfg;
  cfg.dim = 16;
  cfg.max_len = 10;
  const auto m = dual::make_model<double>(items, cfg, 2);
  const auto tables = dual::item_tables(m);
  double worst_score = 0;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<corpus::ItemId> seq;
    for (int k = 0; k < 1 + trial % 10; ++k) seq.push_back(static_cast<corpus::ItemId>(uniform_index(rng, 50)));
    const auto u = dual::represent(m, seq);
    RowVec<double> joined(32);
    joined << u.se, u.co;
    for (corpus::ItemId v = 0; v < 50; ++v) {
      RowVec<double> item(32);
      item << tables.semantic.row(v), tables.collab.row(v);
      const double sum = u.se.dot(tables.semantic.row(v)) + u.co.dot(tables.collab.row(v));
      worst_score = std::max({worst_score, std::abs(joined.dot(item) - sum), std::abs(dual::score(u, v, tables) - sum)});
    }
  }

  // Softmax rows sum to one.
  double worst_softmax = 0;
  std::mt19937 g(4);
  std::normal_distribution<float> nd(0.0f, 5.0f);
  for (int trial = 0; trial < 100; ++trial) {
    MatF x(1 + trial % 7, 1 + trial % 50);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = nd(g);
    const MatF p = num::softmax_rows(x);
    for (Index i = 0; i < p.rows(); ++i) worst_softmax = std::max(worst_softmax, std::abs(p.row(i).sum() - 1.0));
  }

  // Pareto head counts.
  Index bad_heads = 0;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const auto d = corpus::synth_generate({.n_users = 97 + 113 * static_cast<Index>(seed), .n_items = 53 + 17 * static_cast<Index>(seed)}, seed);
    const auto tags = corpus::pareto_split(d.corpus);
    const auto want_u = static_cast<Index>(std::ceil(0.2 * static_cast<double>(d.corpus.num_users()) - 1e-9));
    const auto want_i = static_cast<Index>(std::ceil(0.2 * static_cast<double>(d.corpus.num_items()) - 1e-9));
    if (tags.head_user_count() != want_u || tags.head_item_count() != want_i) ++bad_heads;
  }
  return {worst_score <= 1e-6 && worst_softmax <= 1e-6 && bad_heads == 0,
          fmt("score decomposition error %.3g, softmax row-sum error %.3g, %lld wrong head counts", worst_score,
              worst_softmax, static_cast<long long>(bad_heads))};
}

// ---- AC7 ---------------------------------------------------------------------------

Outcome ac7() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> variants{"full", "w/o Se-view", "w/o SD"};
  std::map<std::string, std::vector<double>> tail_item_h10, tail_user_n10;
  for (std::uint64_t seed : {42, 43, 44}) {
    const auto data = corpus::synth_generate({.n_users = 2000, .n_items = 500, .n_clusters = 8, .zipf_s = 1.2,
                                              .mean_len = 12.0, .d_llm = 32},
                                             seed);
    const corpus::SplitCorpus split(data.corpus);
    const auto tags = corpus::assign_groups(data.corpus);
    const auto retrieval = distill::retrieve_all(distill::build_index(data.user_embeddings, 10));
    train::TrainConfig base;
    base.dim = 32;
    base.seed = seed;
    base.workers = default_workers();
    for (const auto& v : variants) {
      const auto cfg = v == "full" ? base : train::run_ablation(v, base);
      auto model = dual::make_model<float>(data.item_embeddings, cfg.model_config(), seed);
      const auto r = train::train(std::move(model), split, cfg.alpha > 0 ? &retrieval : nullptr, cfg);
      const auto rep = eval::evaluate(r.model, split, tags, seed, cfg.workers);
      tail_item_h10[v].push_back(rep.slice("tail_item").h10);
      tail_user_n10[v].push_back(rep.slice("tail_user").n10);
      std::cout << fmt("  AC7 seed %llu %-12s best epoch %3lld  tail-item H@10 %.4f  tail-user N@10 %.4f  (%.0fs)\n",
                       static_cast<unsigned long long>(seed), v.c_str(), static_cast<long long>(r.log.best_epoch),
                       rep.slice("tail_item").h10, rep.slice("tail_user").n10, seconds_since(t0))
                << std::flush;
    }
  }
  auto mean = [](const std::vector<double>& x) { return eval::mean_std(x).mean; };
  const double full_h = mean(tail_item_h10["full"]), co_h = mean(tail_item_h10["w/o Se-view"]);
  const double full_n = mean(tail_user_n10["full"]), nosd_n = mean(tail_user_n10["w/o SD"]);
  const double rel = co_h > 0 ? (full_h - co_h) / co_h : 0.0;
  const bool a = rel >= 0.15;
  const bool b = full_n - nosd_n > 0;
  const double secs = seconds_since(t0);
  return {a && b && secs < 1800,
          fmt("(a) tail-item H@10 full %.4f vs w/o Se-view %.4f, %+.1f%% [%s]; (b) tail-user N@10 full %.4f vs "
              "w/o SD %.4f, margin %+.4f [%s]; %.0fs",
              full_h, co_h, 100 * rel, a ? "pass" : "fail", full_n, nosd_n, full_n - nosd_n, b ? "pass" : "fail",
              secs)};
}

// ---- AC8 ---------------------------------------------------------------------------

int tool(std::vector<std::string> args, std::string* err = nullptr) {
  args.insert(args.begin(), "lesr");
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (err) *err = e.str();
  return code;
}

Outcome ac8(const fs::path& work) {
  std::vector<std::vector<std::uint8_t>> reports;
  for (const char* name : {"first", "second"}) {
    const auto d = work / "ac8" / name;
    fs::remove_all(d);
    const std::string s = "42";
    std::string err;
    const std::vector<std::vector<std::string>> steps{
        {"synth", "--seed", s, "--users", "400", "--items", "150", "--out", (d / "synth").string()},
        {"prompts", "--corpus", (d / "synth").string(), "--out", (d / "prompts").string()},
        {"embed", "--prompts", (d / "prompts").string(), "--provider", "mock", "--mock-dim", "32", "--seed", s,
         "--out", (d / "emb").string()},
        {"retrieve", "--users", (d / "emb").string(), "--out", (d / "retr").string()},
        {"train", "--corpus", (d / "synth").string(), "--items", (d / "emb").string(), "--retrieval",
         (d / "retr").string(), "--dim", "16", "--max-epochs", "3", "--seed", s, "--out", (d / "run").string()},
        {"eval", "--run", (d / "run").string(), "--corpus", (d / "synth").string(), "--seed", s, "--out",
         (d / "eval").string()},
    };
    for (const auto& step : steps) {
      const int code = tool(step, &err);
      if (code != 0) return {false, fmt("`lesr %s` exited %d: %s", step[0].c_str(), code, err.c_str())};
    }
    reports.push_back(read_file_bytes(d / "eval" / "report.json"));
  }
  return {reports[0] == reports[1] && !reports[0].empty(),
          fmt("report.json %s across two runs (%zu bytes)", reports[0] == reports[1] ? "identical" : "differs",
              reports[0].size())};
}

// ---- AC9 ---------------------------------------------------------------------------

Outcome ac9(const fs::path& work) {
  const auto dir = work / "ac9";
  fs::create_directories(dir);
  std::vector<std::string> failures;

  // Each artifact: write, read back, compare; then corrupt three ways.
  struct Artifact {
    std::string name;
    std::function<void(const fs::path&)> write;
    std::function<bool(const fs::path&)> read_equal;
  };
  const auto data = corpus::synth_generate({.n_users = 80, .n_items = 40}, 9);
  const auto retrieval = distill::retrieve_all(distill::build_index(data.user_embeddings, 5));
  dual::ModelConfig mc;
  mc.dim = 8;
  mc.max_len = 6;
  const auto model = dual::make_model<float>(data.item_embeddings, mc, 3);
  const std::vector<Artifact> artifacts{
      {"embedding cache", [&](const fs::path& p) { semantic::write_cache(data.item_embeddings, p); },
       [&](const fs::path& p) { return semantic::read_cache(p) == data.item_embeddings; }},
      {"retrieval file", [&](const fs::path& p) { distill::write_retrieval(retrieval, p); },
       [&](const fs::path& p) { return distill::read_retrieval(p) == retrieval; }},
      {"corpus snapshot", [&](const fs::path& p) { corpus::write_corpus(data.corpus, p); },
       [&](const fs::path& p) { return corpus::read_corpus(p) == data.corpus; }},
      {"checkpoint", [&](const fs::path& p) { dual::write_checkpoint(model, p); },
       [&](const fs::path& p) { return dual::bitwise_equal(dual::read_checkpoint(p), model); }},
  };
  for (const auto& a : artifacts) {
    const auto path = dir / "artifact.bin";
    a.write(path);
    const auto bytes = read_file_bytes(path);
    if (!a.read_equal(path)) failures.push_back(a.name + ": round trip differs");
    a.write(dir / "again.bin");
    if (read_file_bytes(dir / "again.bin") != bytes) failures.push_back(a.name + ": rewrite not byte-identical");

    auto expect = [&](std::vector<std::uint8_t> b, FormatErrc code, const char* what) {
      write_file_atomic(dir / "bad.bin", b);
      try {
        a.read_equal(dir / "bad.bin");
        failures.push_back(a.name + ": accepted " + what);
      } catch (const FormatError& e) {
        if (e.code() != code)
          failures.push_back(a.name + ": " + what + " gave code " + std::to_string(static_cast<int>(e.code())));
      }
    };
    auto flipped = bytes;
    flipped[bytes.size() - 12] ^= 0x10;
    expect(flipped, FormatErrc::kChecksum, "a flipped payload bit");
    auto magic = bytes;
    magic[0] ^= 0x20;
    expect(magic, FormatErrc::kBadMagic, "a bad magic");
    auto version = bytes;
    version[8] = 0xee;
    expect(version, FormatErrc::kBadVersion, "a bad version");
    expect(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - static_cast<long>(bytes.size() / 3)),
           FormatErrc::kTruncated, "a truncated file");
  }
  std::string detail = "4 formats round trip bitwise and reject corruption with specific codes";
  if (!failures.empty()) {
    detail.clear();
    for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = (fs::temp_directory_path() / "lesr-acceptance").string();
  std::string only, known;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--only", only, "Comma-separated subset, e.g. AC1,AC5");
  app.add_option("--known-failure", known, "Comma-separated criteria whose failure does not fail the run");
  CLI11_PARSE(app, argc, argv);

  auto split = [](const std::string& s) {
    std::set<std::string> out;
    std::stringstream ss(s);
    for (std::string x; std::getline(ss, x, ',');)
      if (!x.empty()) out.insert(x);
    return out;
  };
  const auto selected = split(only);
  const auto known_failures = split(known);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"AC1", ac1},
      {"AC2", ac2},
      {"AC3", ac3},
      {"AC4", ac4},
      {"AC5", ac5},
      {"AC6", ac6},
      {"AC7", ac7},
      {"AC8", [&] { return ac8(work); }},
      {"AC9", [&] { return ac9(work); }},
  };
  // Results also go to a file, since ctest hides the output of passing tests.
  std::ofstream results(fs::path(work) / "results.txt");
  int unexpected = 0;
  for (const auto& [name, fn] : checks) {
    if (!selected.empty() && !selected.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known_fail = known_failures.count(name) > 0;
    const std::string line = name + (o.pass ? " PASS " : " FAIL ") + o.detail +
                             (!o.pass && known_fail ? " (known failure)" : "");
    std::cout << line << "\n" << std::flush;
    results << line << "\n" << std::flush;
    if (!o.pass && !known_fail) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
