#pragma once

#include <cstdint>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/semantic/table.hpp"

namespace lesr::corpus {

struct SynthConfig {
  Index n_users = 2000;
  Index n_items = 500;
  Index n_clusters = 8;
  double zipf_s = 1.2;
  double mean_len = 12.0;
  Index d_llm = 32;

  // Generator shape. Not part of the public experiment knobs, but exposed so
  // tests can probe the construction.
  double item_noise = 0.6;      // std of the item-embedding noise, relative to a unit centroid
  double user_noise = 0.3;      // std of the user-embedding noise
  double off_cluster = 0.2;     // share of a user's draws taken from the global popularity law
};

struct SynthData {
  Corpus corpus;
  semantic::EmbeddingTable item_embeddings;  // E_se stand-in
  semantic::EmbeddingTable user_embeddings;  // U_llm stand-in
  std::vector<int> item_cluster;
  std::vector<int> user_cluster;             // dominant preference cluster
};

// Zipf(s) probability of each popularity rank 1..n (index 0 = rank 1).
std::vector<double> zipf_pmf(Index n, double s);

// Clustered long-tail corpus. Items get a random popularity rank with Zipf(s)
// weights and a random latent cluster; each user draws a dominant cluster
// with probability equal to that cluster's popularity mass, then fills a
// sequence of length 3 + Geometric(mean_len - 3) by picking the dominant
// cluster (probability 1 - off_cluster) or the global law, and an item
// within the chosen cluster proportionally to its Zipf weight. The item
// marginal therefore equals the Zipf law in expectation.
//
// Embeddings: unit-norm Gaussian cluster centroids; item = centroid + noise;
// user = preference-weighted centroid mixture + noise.
SynthData synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace lesr::corpus
