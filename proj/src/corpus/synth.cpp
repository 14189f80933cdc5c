#include "lesr/corpus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lesr/common/error.hpp"
#include "lesr/common/random.hpp"

namespace lesr::corpus {

namespace {

std::size_t sample_cdf(const std::vector<double>& cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

template <class V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<double> unit_gaussian(Index dim, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0;
  for (auto& x : v) {
    x = standard_normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

std::vector<double> zipf_pmf(Index n, double s) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double z = 0;
  for (Index k = 1; k <= n; ++k) z += p[static_cast<std::size_t>(k - 1)] = std::pow(static_cast<double>(k), -s);
  for (auto& x : p) x /= z;
  return p;
}

SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.n_users < 1 || cfg.n_items < 1 || cfg.n_clusters < 1 || cfg.d_llm < 1)
    throw ParameterError("synth: sizes must be positive");
  if (cfg.n_clusters > cfg.n_items) throw ParameterError("synth: n_clusters exceeds n_items");
  if (!(cfg.mean_len >= 3.0)) throw ParameterError("synth: mean_len must be at least 3");
  if (!(cfg.zipf_s > 0.0)) throw ParameterError("synth: zipf_s must be positive");
  if (cfg.off_cluster < 0.0 || cfg.off_cluster > 1.0) throw ParameterError("synth: off_cluster outside [0, 1]");

  Rng rng = make_rng(seed, "corpus");
  const auto n_items = static_cast<std::size_t>(cfg.n_items);
  const auto n_clusters = static_cast<std::size_t>(cfg.n_clusters);

  // Popularity weight by a random rank; clusters by a balanced random deal.
  const auto pmf = zipf_pmf(cfg.n_items, cfg.zipf_s);
  std::vector<std::size_t> rank(n_items);
  std::iota(rank.begin(), rank.end(), 0);
  shuffle(rank, rng);
  std::vector<double> weight(n_items);
  for (std::size_t i = 0; i < n_items; ++i) weight[i] = pmf[rank[i]];

  std::vector<std::size_t> deal(n_items);
  std::iota(deal.begin(), deal.end(), 0);
  shuffle(deal, rng);
  SynthData out;
  out.item_cluster.assign(n_items, 0);
  for (std::size_t k = 0; k < n_items; ++k) out.item_cluster[deal[k]] = static_cast<int>(k % n_clusters);

  std::vector<std::vector<std::size_t>> members(n_clusters);
  std::vector<std::vector<double>> member_cdf(n_clusters);
  std::vector<double> mass(n_clusters, 0.0);
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto c = static_cast<std::size_t>(out.item_cluster[i]);
    members[c].push_back(i);
    mass[c] += weight[i];
    member_cdf[c].push_back(mass[c]);
  }
  std::vector<double> mass_cdf(n_clusters), global_cdf(n_items);
  std::partial_sum(mass.begin(), mass.end(), mass_cdf.begin());
  std::partial_sum(weight.begin(), weight.end(), global_cdf.begin());

  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < n_clusters; ++c) centroids.push_back(unit_gaussian(cfg.d_llm, rng));

  const auto dim = static_cast<std::size_t>(cfg.d_llm);
  const double item_sd = cfg.item_noise / std::sqrt(static_cast<double>(dim));
  const double user_sd = cfg.user_noise / std::sqrt(static_cast<double>(dim));

  out.item_embeddings = semantic::EmbeddingTable(semantic::EntityKind::kItem, cfg.n_items, cfg.d_llm);
  for (std::size_t i = 0; i < n_items; ++i) {
    auto row = out.item_embeddings.row(static_cast<Index>(i));
    const auto& mu = centroids[static_cast<std::size_t>(out.item_cluster[i])];
    for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(mu[j] + item_sd * standard_normal(rng));
  }

  // Users.
  auto& corpus = out.corpus;
  const double stop = 1.0 / (cfg.mean_len - 3.0 + 1.0);
  out.user_embeddings = semantic::EmbeddingTable(semantic::EntityKind::kUser, cfg.n_users, cfg.d_llm);
  for (Index u = 0; u < cfg.n_users; ++u) {
    const auto home = sample_cdf(mass_cdf, rng);
    out.user_cluster.push_back(static_cast<int>(home));
    Index extra = 0;
    if (stop < 1.0) {
      double v;
      do {
        v = uniform01(rng);
      } while (v <= 0.0);
      extra = static_cast<Index>(std::floor(std::log(v) / std::log1p(-stop)));
    }
    const Index len = 3 + extra;
    auto& seq = corpus.sequences.emplace_back();
    auto& ts = corpus.timestamps.emplace_back();
    for (Index k = 0; k < len; ++k) {
      std::size_t item;
      if (uniform01(rng) < cfg.off_cluster) {
        item = sample_cdf(global_cdf, rng);
      } else {
        item = members[home][sample_cdf(member_cdf[home], rng)];
      }
      seq.push_back(static_cast<ItemId>(item));
      ts.push_back(static_cast<double>(k));
    }
    corpus.user_keys.push_back("u" + std::to_string(u));

    const double total_mass = mass_cdf.back();
    auto row = out.user_embeddings.row(u);
    for (std::size_t j = 0; j < dim; ++j) {
      double x = 0;
      for (std::size_t c = 0; c < n_clusters; ++c) {
        const double pref = cfg.off_cluster * mass[c] / total_mass + (c == home ? 1.0 - cfg.off_cluster : 0.0);
        x += pref * centroids[c][j];
      }
      row[j] = static_cast<float>(x + user_sd * standard_normal(rng));
    }
  }

  for (std::size_t i = 0; i < n_items; ++i) corpus.item_keys.push_back("i" + std::to_string(i));
  corpus.recompute_popularity();
  static constexpr const char* kCities[] = {"Phoenix", "Toronto", "Las Vegas", "Charlotte"};
  for (std::size_t i = 0; i < n_items; ++i) {
    const int c = out.item_cluster[i];
    Attributes a;
    a["name"] = "Item " + std::to_string(i);
    a["title"] = a["name"];
    a["category"] = "Category " + std::to_string(c);
    a["type"] = "POI";
    a["open"] = "True";
    a["count"] = std::to_string(corpus.popularity[i]);
    a["city"] = kCities[i % 4];
    a["stars"] = std::to_string(3 + static_cast<int>(rank[i] % 3)) + ".0";
    corpus.item_attributes.push_back(std::move(a));
  }
  return out;
}

}  // namespace lesr::corpus
