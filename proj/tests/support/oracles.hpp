#pragma once
// Independent reference implementations. They share no code with the
// library beyond plain data types, and favor obviousness over speed.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/numerics/tensor.hpp"
#include "lesr/semantic/table.hpp"

namespace oracle {

using lesr::num::Index;
using lesr::num::MatD;

// Softmax by direct exponentiation in long double.
inline MatD softmax(const MatD& m) {
  MatD out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    long double z = 0;
    for (Index j = 0; j < m.cols(); ++j) z += std::exp(static_cast<long double>(m(i, j)));
    for (Index j = 0; j < m.cols(); ++j) out(i, j) = static_cast<double>(std::exp(static_cast<long double>(m(i, j))) / z);
  }
  return out;
}

// Full sort of (score desc, id asc), then the 1-based position of `target_pos`.
inline Index rank_by_sort(const std::vector<Index>& ids, const std::vector<float>& scores, std::size_t target_pos) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == target_pos) return static_cast<Index>(i + 1);
  return -1;
}

// DCG of a top-10 list with one relevant item, summed position by position.
inline std::pair<double, double> hit_ndcg_by_list(Index rank) {
  double hit = 0, dcg = 0;
  for (Index pos = 1; pos <= 10; ++pos) {
    const double rel = pos == rank ? 1.0 : 0.0;
    hit += rel;
    dcg += rel / std::log2(static_cast<double>(pos) + 1.0);
  }
  return {hit, dcg / 1.0};  // ideal DCG for one relevant item is 1
}

// Exhaustive cosine top-n excluding the query, ties by ascending id.
inline std::vector<Index> top_n_cosine(const lesr::semantic::EmbeddingTable& t, Index k, Index n) {
  auto dot = [&](Index a, Index b) {
    double s = 0;
    for (Index j = 0; j < t.dim; ++j)
      s += static_cast<double>(t.values[static_cast<std::size_t>(a * t.dim + j)]) *
           static_cast<double>(t.values[static_cast<std::size_t>(b * t.dim + j)]);
    return s;
  };
  std::vector<std::pair<double, Index>> all;
  const double nk = std::sqrt(dot(k, k));
  for (Index u = 0; u < t.count; ++u) {
    if (u == k) continue;
    const double nu = std::sqrt(dot(u, u));
    all.emplace_back(nu == 0 ? 0.0 : dot(k, u) / (nk * nu), u);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<Index> out;
  for (Index i = 0; i < n; ++i) out.push_back(all[static_cast<std::size_t>(i)].second);
  return out;
}

// Random table with entries from a small integer grid so that exact cosine
// ties occur.
inline lesr::semantic::EmbeddingTable random_table(lesr::semantic::EntityKind kind, Index n, Index d, unsigned seed,
                                                   bool coarse = false) {
  lesr::semantic::EmbeddingTable t(kind, n, d);
  std::mt19937 rng(seed);
  std::normal_distribution<float> g;
  std::uniform_int_distribution<int> c(-2, 2);
  for (auto& v : t.values) v = coarse ? static_cast<float>(c(rng)) : g(rng);
  if (coarse)
    for (Index u = 0; u < n; ++u) {
      bool zero = true;
      for (auto v : t.row(u)) zero = zero && v == 0;
      if (zero) t.row(u)[0] = 1;
    }
  return t;
}

// Corpus from explicit sequences; item ids must be < num_items.
inline lesr::corpus::Corpus make_corpus(const std::vector<std::vector<Index>>& seqs, Index num_items) {
  lesr::corpus::Corpus c;
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    c.user_keys.push_back("u" + std::to_string(u));
    c.sequences.push_back(seqs[u]);
    std::vector<double> ts;
    for (std::size_t i = 0; i < seqs[u].size(); ++i) ts.push_back(static_cast<double>(i));
    c.timestamps.push_back(ts);
  }
  for (Index v = 0; v < num_items; ++v) {
    c.item_keys.push_back("i" + std::to_string(v));
    c.item_attributes.push_back({{"title", "T" + std::to_string(v)}});
  }
  c.recompute_popularity();
  return c;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("lesr-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace oracle
