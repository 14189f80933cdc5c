#include "lesr/corpus/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <nlohmann/json.hpp>
#include <unordered_map>
#include <utility>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"

namespace lesr::corpus {

namespace {

constexpr std::string_view kCorpusMagic = "LESRCORP";
constexpr std::uint32_t kCorpusVersion = 2;

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string attribute_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "unknown";
  return v.dump();
}

}  // namespace

Index Corpus::num_interactions() const {
  Index n = 0;
  for (const auto& s : sequences) n += static_cast<Index>(s.size());
  return n;
}

void Corpus::recompute_popularity() {
  popularity.assign(item_keys.size(), 0);
  for (const auto& s : sequences)
    for (auto v : s) ++popularity[static_cast<std::size_t>(v)];
}

void Corpus::validate() const {
  if (user_keys.size() != sequences.size()) throw DataError("corpus: user key count differs from user count");
  if (timestamps.size() != sequences.size()) throw DataError("corpus: timestamps misaligned with sequences");
  if (item_attributes.size() != item_keys.size()) throw DataError("corpus: attribute table misaligned");
  if (popularity.size() != item_keys.size()) throw DataError("corpus: popularity not computed");
  std::vector<Index> pop(item_keys.size(), 0);
  for (std::size_t u = 0; u < sequences.size(); ++u) {
    if (timestamps[u].size() != sequences[u].size()) throw DataError("corpus: timestamps misaligned for a user");
    for (auto v : sequences[u]) {
      if (v < 0 || v >= num_items()) throw DataError("corpus: item id " + std::to_string(v) + " out of range");
      ++pop[static_cast<std::size_t>(v)];
    }
  }
  if (pop != popularity) throw DataError("corpus: popularity does not match sequences");
}

Corpus load_interactions(const std::filesystem::path& interactions_path, const std::filesystem::path& items_path) {
  std::ifstream in(interactions_path);
  if (!in) throw DataError("cannot open interactions file " + interactions_path.string());

  struct Row {
    Index user, item;
    double ts;
    std::size_t order;
  };
  Corpus c;
  std::unordered_map<std::string, Index> user_ids, item_ids;
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    double ts = 0;
    const bool numeric = fields.size() == 3 && parse_double(fields[2], ts);
    const bool header_candidate = std::exchange(first_row, false);
    if (!numeric) {
      if (header_candidate && fields.size() == 3) continue;
      throw DataError(interactions_path.string() + ":" + std::to_string(line_no) +
                      ": expected <user>\\t<item>\\t<numeric timestamp>");
    }
    if (fields[0].empty() || fields[1].empty())
      throw DataError(interactions_path.string() + ":" + std::to_string(line_no) + ": empty key");
    auto [uit, unew] = user_ids.try_emplace(std::string(fields[0]), static_cast<Index>(c.user_keys.size()));
    if (unew) c.user_keys.emplace_back(fields[0]);
    auto [iit, inew] = item_ids.try_emplace(std::string(fields[1]), static_cast<Index>(c.item_keys.size()));
    if (inew) c.item_keys.emplace_back(fields[1]);
    rows.push_back({uit->second, iit->second, ts, rows.size()});
  }
  if (rows.empty()) throw DataError("no interactions in " + interactions_path.string());

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
  c.sequences.resize(c.user_keys.size());
  c.timestamps.resize(c.user_keys.size());
  for (const auto& r : rows) {
    c.sequences[static_cast<std::size_t>(r.user)].push_back(r.item);
    c.timestamps[static_cast<std::size_t>(r.user)].push_back(r.ts);
  }
  c.item_attributes.resize(c.item_keys.size());

  if (!items_path.empty()) {
    std::ifstream items(items_path);
    if (!items) throw DataError("cannot open items file " + items_path.string());
    line_no = 0;
    while (std::getline(items, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(items_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (!obj.is_object() || !obj.contains("id"))
        throw DataError(items_path.string() + ":" + std::to_string(line_no) + ": object with \"id\" expected");
      auto it = item_ids.find(attribute_string(obj["id"]));
      if (it == item_ids.end()) continue;
      auto& attrs = c.item_attributes[static_cast<std::size_t>(it->second)];
      for (auto& [k, v] : obj.items())
        if (k != "id") attrs[k] = attribute_string(v);
    }
  }
  c.recompute_popularity();
  return c;
}

Corpus preprocess(const Corpus& corpus, Index min_len) {
  Corpus out;
  std::vector<Index> item_map(static_cast<std::size_t>(corpus.num_items()), -1);
  std::vector<bool> used(static_cast<std::size_t>(corpus.num_items()), false);
  std::vector<UserId> kept;
  for (UserId u = 0; u < corpus.num_users(); ++u) {
    if (corpus.length(u) < min_len) continue;
    kept.push_back(u);
    for (auto v : corpus.sequences[static_cast<std::size_t>(u)]) used[static_cast<std::size_t>(v)] = true;
  }
  if (kept.empty()) throw DataError("corpus exhausted by filtering");
  for (ItemId v = 0; v < corpus.num_items(); ++v) {
    if (!used[static_cast<std::size_t>(v)]) continue;
    item_map[static_cast<std::size_t>(v)] = out.num_items();
    out.item_keys.push_back(corpus.item_keys[static_cast<std::size_t>(v)]);
    out.item_attributes.push_back(corpus.item_attributes[static_cast<std::size_t>(v)]);
  }
  for (auto u : kept) {
    const auto su = static_cast<std::size_t>(u);
    out.user_keys.push_back(corpus.user_keys[su]);
    auto& seq = out.sequences.emplace_back();
    for (auto v : corpus.sequences[su]) seq.push_back(item_map[static_cast<std::size_t>(v)]);
    out.timestamps.push_back(corpus.timestamps[su]);
  }
  out.recompute_popularity();
  return out;
}

std::span<const ItemId> most_recent(std::span<const ItemId> seq, Index max_len) {
  if (max_len <= 0 || static_cast<Index>(seq.size()) <= max_len) return seq;
  return seq.last(static_cast<std::size_t>(max_len));
}

SplitCorpus::SplitCorpus(const Corpus& corpus) : seqs_(corpus.sequences) {
  for (std::size_t u = 0; u < seqs_.size(); ++u)
    if (seqs_[u].size() < 3)
      throw DataError("leave-one-out split needs at least 3 interactions (user " + corpus.user_keys[u] + ")");
}

SplitCorpus leave_one_out_split(const Corpus& corpus) { return SplitCorpus(corpus); }

Index head_count(Index n, double fraction) {
  return static_cast<Index>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

Index GroupTags::head_user_count() const { return std::count(user_head.begin(), user_head.end(), true); }
Index GroupTags::head_item_count() const { return std::count(item_head.begin(), item_head.end(), true); }

namespace {

std::vector<bool> top_fraction(const std::vector<Index>& stat) {
  std::vector<Index> order(stat.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return stat[static_cast<std::size_t>(a)] > stat[static_cast<std::size_t>(b)];
  });
  std::vector<bool> head(stat.size(), false);
  const Index k = head_count(static_cast<Index>(stat.size()));
  for (Index i = 0; i < k; ++i) head[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  return head;
}

void check_edges(std::span<const Index> edges, const char* what) {
  if (edges.size() != 4) throw ParameterError(std::string(what) + " edges: exactly 4 interior edges required");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i] <= edges[i - 1]) throw ParameterError(std::string(what) + " edges must be strictly increasing");
}

}  // namespace

GroupTags pareto_split(const Corpus& corpus) {
  std::vector<Index> lengths;
  lengths.reserve(static_cast<std::size_t>(corpus.num_users()));
  for (UserId u = 0; u < corpus.num_users(); ++u) lengths.push_back(corpus.length(u));
  GroupTags tags;
  tags.user_head = top_fraction(lengths);
  tags.item_head = top_fraction(corpus.popularity);
  return tags;
}

int bucket_of(Index value, std::span<const Index> edges) {
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

void bucket_groups(const Corpus& corpus, std::span<const Index> user_edges, std::span<const Index> item_edges,
                   GroupTags& tags) {
  check_edges(user_edges, "user");
  check_edges(item_edges, "item");
  tags.user_bucket.clear();
  tags.item_bucket.clear();
  for (UserId u = 0; u < corpus.num_users(); ++u) tags.user_bucket.push_back(bucket_of(corpus.length(u), user_edges));
  for (auto p : corpus.popularity) tags.item_bucket.push_back(bucket_of(p, item_edges));
  if (tags.user_head.empty()) tags.user_head.assign(static_cast<std::size_t>(corpus.num_users()), false);
  if (tags.item_head.empty()) tags.item_head.assign(static_cast<std::size_t>(corpus.num_items()), false);
}

GroupTags assign_groups(const Corpus& corpus) {
  auto tags = pareto_split(corpus);
  bucket_groups(corpus, kDefaultUserEdges, kDefaultItemEdges, tags);
  return tags;
}

// Layout: magic | version u32 | users u32 | items u32 | payload bytes u64 |
// payload | fnv1a u64 of the payload
// payload: item keys, item attributes, then per user key, length, item ids
// (u32) and timestamps (f64).
void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  corpus.validate();
  ByteWriter w;
  w.bytes(kCorpusMagic);
  w.u32(kCorpusVersion);
  w.u32(static_cast<std::uint32_t>(corpus.num_users()));
  w.u32(static_cast<std::uint32_t>(corpus.num_items()));
  ByteWriter p;
  for (ItemId v = 0; v < corpus.num_items(); ++v) {
    p.str(corpus.item_keys[static_cast<std::size_t>(v)]);
    const auto& attrs = corpus.item_attributes[static_cast<std::size_t>(v)];
    p.u32(static_cast<std::uint32_t>(attrs.size()));
    for (const auto& [k, val] : attrs) {
      p.str(k);
      p.str(val);
    }
  }
  for (UserId u = 0; u < corpus.num_users(); ++u) {
    const auto su = static_cast<std::size_t>(u);
    p.str(corpus.user_keys[su]);
    p.u32(static_cast<std::uint32_t>(corpus.sequences[su].size()));
    for (auto v : corpus.sequences[su]) p.u32(static_cast<std::uint32_t>(v));
    for (auto t : corpus.timestamps[su]) p.f64(t);
  }
  w.u64(p.size());
  w.raw(p.buffer().data(), p.size());
  w.u64(p.checksum_from(0));
  write_file_atomic(path, w.buffer());
}

Corpus read_corpus(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  ByteReader in(data);
  expect_header(in, kCorpusMagic, kCorpusVersion);
  const auto n_users = in.u32();
  const auto n_items = in.u32();
  const auto declared = in.u64();
  const auto payload = in.pos();
  if (data.size() - payload < 8 || data.size() - payload - 8 < declared)
    throw FormatError(FormatErrc::kTruncated, "file shorter than the declared payload");
  if (data.size() - payload - 8 > declared)
    throw FormatError(FormatErrc::kInconsistent, "trailing bytes after the declared payload");
  expect_checksum(data, payload);
  ByteReader body{std::span<const std::uint8_t>(data).first(data.size() - 8)};
  body.bytes(payload);

  Corpus c;
  c.item_keys.reserve(n_items);
  c.item_attributes.resize(n_items);
  for (std::uint32_t v = 0; v < n_items; ++v) {
    c.item_keys.push_back(body.str());
    const auto n_attr = body.u32();
    for (std::uint32_t a = 0; a < n_attr; ++a) {
      auto k = body.str();
      c.item_attributes[v][k] = body.str();
    }
  }
  c.sequences.resize(n_users);
  c.timestamps.resize(n_users);
  for (std::uint32_t u = 0; u < n_users; ++u) {
    c.user_keys.push_back(body.str());
    const auto len = body.u32();
    if (static_cast<std::size_t>(len) * 12 > body.remaining())
      throw FormatError(FormatErrc::kInconsistent, "sequence length exceeds file size");
    for (std::uint32_t i = 0; i < len; ++i) {
      const auto v = body.u32();
      if (v >= n_items) throw FormatError(FormatErrc::kInconsistent, "item id out of range");
      c.sequences[u].push_back(v);
    }
    for (std::uint32_t i = 0; i < len; ++i) c.timestamps[u].push_back(body.f64());
  }
  if (body.remaining() != 0) throw FormatError(FormatErrc::kInconsistent, "trailing bytes after corpus payload");
  c.recompute_popularity();
  return c;
}

}  // namespace lesr::corpus
