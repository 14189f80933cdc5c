#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "../support/oracles.hpp"
#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/corpus/corpus.hpp"
#include "lesr/corpus/synth.hpp"

using namespace lesr;
using namespace lesr::corpus;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("interactions are ordered by timestamp with ties in file order") {
  oracle::TempDir dir("corpus");
  write_text(dir / "x.tsv", "user\titem\tts\nA\tp\t30\nA\tq\t10\nA\tr\t20\nB\tq\t5\nA\ts\t20\n");
  const auto c = load_interactions(dir / "x.tsv");
  REQUIRE(c.num_users() == 2);
  std::vector<std::string> order;
  for (auto v : c.sequences[0]) order.push_back(c.item_keys[static_cast<std::size_t>(v)]);
  CHECK(order == std::vector<std::string>{"q", "r", "s", "p"});
  const auto q = std::find(c.item_keys.begin(), c.item_keys.end(), "q") - c.item_keys.begin();
  CHECK(c.popularity[static_cast<std::size_t>(q)] == 2);
  c.validate();
}

TEST_CASE("malformed interaction rows name their line") {
  oracle::TempDir dir("corpus");
  write_text(dir / "bad.tsv", "A\tp\t1\nA\tq\n");
  try {
    load_interactions(dir / "bad.tsv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_interactions(dir / "missing.tsv"), DataError);
}

TEST_CASE("item attributes are read from JSON lines") {
  oracle::TempDir dir("corpus");
  write_text(dir / "x.tsv", "A\tp\t1\nA\tq\t2\n");
  write_text(dir / "items.jsonl", "{\"id\": \"q\", \"title\": \"Queue\", \"price\": 3}\n");
  const auto c = load_interactions(dir / "x.tsv", dir / "items.jsonl");
  const auto q = std::find(c.item_keys.begin(), c.item_keys.end(), "q") - c.item_keys.begin();
  CHECK(c.item_attributes[static_cast<std::size_t>(q)].at("title") == "Queue");
  CHECK(c.item_attributes[static_cast<std::size_t>(q)].at("price") == "3");
}

TEST_CASE("preprocess drops short users and orphaned items") {
  // Users 0 and 3 are short; item 4 is consumed only by user 0.
  const auto c = oracle::make_corpus({{4, 1}, {0, 1, 2}, {1, 2, 3, 0}, {2}, {0, 0, 3}}, 5);
  const auto p = preprocess(c, 3);
  CHECK(p.num_users() == 3);
  CHECK(p.num_items() == 4);
  Index sum_len = 0, sum_pop = 0;
  for (Index u = 0; u < p.num_users(); ++u) sum_len += p.length(u);
  for (auto v : p.popularity) sum_pop += v;
  CHECK(sum_len == sum_pop);
  CHECK(sum_len == 10);
  for (auto v : p.popularity) CHECK(v > 0);
  CHECK(p.user_keys == std::vector<std::string>{"u1", "u2", "u4"});
  p.validate();
  CHECK_THROWS_WITH_AS(preprocess(oracle::make_corpus({{0}}, 1), 3), "corpus exhausted by filtering", DataError);
}

TEST_CASE("leave-one-out split follows the definition") {
  const auto c = oracle::make_corpus({{0, 1, 2, 3}, {4, 5, 6}}, 7);
  SplitCorpus s(c);
  CHECK(s.num_users() == 2);
  CHECK(std::vector<ItemId>(s.train(0).begin(), s.train(0).end()) == std::vector<ItemId>{0, 1});
  CHECK(s.valid_target(0) == 2);
  CHECK(std::vector<ItemId>(s.test_prefix(0).begin(), s.test_prefix(0).end()) == std::vector<ItemId>{0, 1, 2});
  CHECK(s.test_target(0) == 3);
  CHECK(std::vector<ItemId>(s.train(1).begin(), s.train(1).end()) == std::vector<ItemId>{4});
  CHECK(s.valid_target(1) == 5);
  CHECK(s.test_target(1) == 6);
  CHECK_THROWS_AS(SplitCorpus(oracle::make_corpus({{0, 1}}, 2)), DataError);
}

TEST_CASE("pareto split takes the top ceil(20%) with ties to lower ids") {
  std::vector<std::vector<Index>> seqs;
  for (int len = 1; len <= 10; ++len) seqs.push_back(std::vector<Index>(static_cast<std::size_t>(len), 0));
  const auto c = oracle::make_corpus(seqs, 1);
  const auto tags = pareto_split(c);
  CHECK(tags.head_user_count() == 2);
  CHECK(tags.user_head[9]);
  CHECK(tags.user_head[8]);

  std::vector<std::vector<Index>> flat(7, std::vector<Index>{0, 1, 2, 3, 4});
  const auto tags2 = pareto_split(oracle::make_corpus(flat, 5));
  CHECK(tags2.head_item_count() == 1);
  CHECK(tags2.item_head[0]);
  CHECK(head_count(15720) == 3144);
  for (Index n = 1; n < 200; ++n) CHECK(head_count(n) == static_cast<Index>(std::ceil(0.2 * static_cast<double>(n) - 1e-9)));
}

TEST_CASE("default buckets match the named low groups") {
  CHECK(bucket_of(4, kDefaultUserEdges) == 0);
  CHECK(bucket_of(5, kDefaultUserEdges) == 1);
  CHECK(bucket_of(1, kDefaultUserEdges) == 0);
  CHECK(bucket_of(9, kDefaultItemEdges) == 0);
  CHECK(bucket_of(10, kDefaultItemEdges) == 1);
  CHECK(bucket_of(500, kDefaultUserEdges) == 4);
  GroupTags tags;
  const auto c = oracle::make_corpus({{0, 1, 2}}, 3);
  const std::array<Index, 4> bad{5, 5, 6, 7};
  CHECK_THROWS_AS(bucket_groups(c, bad, kDefaultItemEdges, tags), ParameterError);
}

TEST_CASE("corpus snapshot round trip and corruption errors") {
  oracle::TempDir dir("corpus");
  const auto data = synth_generate({.n_users = 60, .n_items = 40, .n_clusters = 4}, 9);
  write_corpus(data.corpus, dir / "c.bin");
  CHECK(read_corpus(dir / "c.bin") == data.corpus);

  auto bytes = read_file_bytes(dir / "c.bin");
  auto expect = [&](std::vector<std::uint8_t> b, FormatErrc code) {
    write_file_atomic(dir / "bad.bin", b);
    try {
      read_corpus(dir / "bad.bin");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.code() == code);
    }
  };
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  expect(flipped, FormatErrc::kChecksum);
  auto magic = bytes;
  magic[0] = 'X';
  expect(magic, FormatErrc::kBadMagic);
  auto version = bytes;
  version[8] = 99;  // first byte of the u32 version
  expect(version, FormatErrc::kBadVersion);
  expect(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 30), FormatErrc::kTruncated);
}

TEST_CASE("synthetic corpus is deterministic") {
  const SynthConfig cfg{.n_users = 200, .n_items = 100, .n_clusters = 5};
  const auto a = synth_generate(cfg, 42);
  const auto b = synth_generate(cfg, 42);
  CHECK(a.corpus == b.corpus);
  CHECK(a.item_embeddings == b.item_embeddings);
  CHECK(a.user_embeddings == b.user_embeddings);
  const auto c = synth_generate(cfg, 43);
  CHECK_FALSE(a.corpus == c.corpus);
  a.corpus.validate();
  for (Index u = 0; u < a.corpus.num_users(); ++u) CHECK(a.corpus.length(u) >= 3);
}

TEST_CASE("synthetic item frequencies follow the Zipf law") {
  const SynthConfig cfg;  // 2000 users, 500 items
  const auto d = synth_generate(cfg, 42);
  std::vector<double> freq(d.corpus.popularity.begin(), d.corpus.popularity.end());
  std::sort(freq.rbegin(), freq.rend());
  double total = 0;
  for (auto f : freq) total += f;
  const auto pmf = zipf_pmf(cfg.n_items, cfg.zipf_s);
  double tv = 0;
  for (std::size_t i = 0; i < pmf.size(); ++i) tv += std::abs(freq[i] / total - pmf[i]);
  CHECK(tv / 2 < 0.1);
}

TEST_CASE("synthetic item embeddings cluster") {
  const auto d = synth_generate({.n_users = 100, .n_items = 120, .n_clusters = 6}, 5);
  double within = 0, across = 0;
  int nw = 0, na = 0;
  for (Index i = 0; i < 120; ++i)
    for (Index j = i + 1; j < 120; ++j) {
      const double c = cosine(d.item_embeddings.row(i), d.item_embeddings.row(j));
      if (d.item_cluster[static_cast<std::size_t>(i)] == d.item_cluster[static_cast<std::size_t>(j)]) {
        within += c;
        ++nw;
      } else {
        across += c;
        ++na;
      }
    }
  CHECK(within / nw > across / na);
}

TEST_CASE("synth rejects infeasible configs") {
  CHECK_THROWS_AS(synth_generate({.mean_len = 2.5}, 1), ParameterError);
  CHECK_THROWS_AS(synth_generate({.n_items = 4, .n_clusters = 8}, 1), ParameterError);
}

TEST_CASE("most_recent keeps the tail") {
  const std::vector<ItemId> s{1, 2, 3, 4, 5};
  const auto r = most_recent(s, 3);
  CHECK(std::vector<ItemId>(r.begin(), r.end()) == std::vector<ItemId>{3, 4, 5});
  CHECK(most_recent(s, 10).size() == 5);
}
