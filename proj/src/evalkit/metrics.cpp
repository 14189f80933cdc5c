#include "lesr/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/common/parallel.hpp"
#include "lesr/dualview/checkpoint.hpp"

namespace lesr::eval {

HitNdcg metrics_at_10(Index rank, Index candidates) {
  if (rank < 1 || rank > candidates)
    throw ParameterError("rank " + std::to_string(rank) + " outside [1, " + std::to_string(candidates) + "]");
  if (rank > kCutoff) return {0.0, 0.0};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

Index rank_of(std::span<const ItemId> candidates, std::span<const float> scores, std::size_t target_pos) {
  if (candidates.size() != scores.size() || target_pos >= candidates.size())
    throw ParameterError("rank_of: scores and candidates differ in size");
  const float st = scores[target_pos];
  const ItemId ct = candidates[target_pos];
  if (std::isnan(st)) throw DomainError("rank_of: NaN score");
  Index rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == target_pos) continue;
    if (std::isnan(scores[i])) throw DomainError("rank_of: NaN score");
    if (scores[i] > st || (scores[i] == st && candidates[i] < ct)) ++rank;
  }
  return rank;
}

std::vector<ItemId> sample_negatives(std::span<const ItemId> history, Index num_items, Index count, Rng& rng,
                                     Index* shortfall) {
  std::vector<char> seen(static_cast<std::size_t>(num_items), 0);
  for (auto v : history) {
    if (v < 0 || v >= num_items) throw DataError("unknown item id " + std::to_string(v));
    seen[static_cast<std::size_t>(v)] = 1;
  }
  std::vector<ItemId> pool;
  pool.reserve(static_cast<std::size_t>(num_items));
  for (ItemId v = 0; v < num_items; ++v)
    if (!seen[static_cast<std::size_t>(v)]) pool.push_back(v);
  const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(take);
  if (shortfall) *shortfall = count - static_cast<Index>(take);
  return pool;
}

const SliceMetrics& MetricsReport::slice(std::string_view name) const {
  for (const auto& s : slices)
    if (s.name == name) return s;
  throw ParameterError("report has no slice '" + std::string(name) + "'");
}

std::vector<SliceMetrics> summarize(std::span<const UserRecord> records, const corpus::GroupTags& tags) {
  const auto& names = slice_names();
  std::vector<SliceMetrics> out(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) out[i].name = names[i];
  auto add = [&](std::size_t slice, const UserRecord& r) {
    out[slice].h10 += r.hit;
    out[slice].n10 += r.ndcg;
    ++out[slice].count;
  };
  for (const auto& r : records) {
    const auto u = static_cast<std::size_t>(r.user);
    const auto v = static_cast<std::size_t>(r.target);
    add(0, r);
    add(tags.item_head[v] ? 2 : 1, r);
    add(tags.user_head[u] ? 4 : 3, r);
    add(5 + static_cast<std::size_t>(tags.user_bucket[u]), r);
    add(10 + static_cast<std::size_t>(tags.item_bucket[v]), r);
  }
  for (auto& s : out)
    if (s.count > 0) {
      s.h10 /= static_cast<double>(s.count);
      s.n10 /= static_cast<double>(s.count);
    }
  return out;
}

MetricsReport evaluate(const corpus::SplitCorpus& split, Index num_items, const corpus::GroupTags& tags,
                       std::uint64_t seed, const Scorer& scorer, std::size_t workers) {
  if (static_cast<Index>(tags.user_head.size()) != split.num_users() ||
      static_cast<Index>(tags.item_head.size()) != num_items)
    throw ParameterError("group tags do not match the corpus");
  MetricsReport report;
  report.seed = seed;
  report.per_user.resize(static_cast<std::size_t>(split.num_users()));
  parallel_for(report.per_user.size(), workers, [&](std::size_t i) {
    const auto u = static_cast<UserId>(i);
    Rng rng = make_rng(seed, "eval_negatives", {static_cast<std::uint64_t>(u)});
    std::vector<ItemId> cand{split.test_target(u)};
    Index shortfall = 0;
    const auto negs = sample_negatives(split.full(u), num_items, kNumNegatives, rng, &shortfall);
    cand.insert(cand.end(), negs.begin(), negs.end());
    const auto scores = scorer(u, cand);
    auto& r = report.per_user[i];
    r.user = u;
    r.target = cand[0];
    r.rank = rank_of(cand, scores, 0);
    const auto m = metrics_at_10(r.rank, static_cast<Index>(cand.size()));
    r.hit = m.hit;
    r.ndcg = m.ndcg;
    r.shortfall = shortfall;
  });
  report.slices = summarize(report.per_user, tags);
  return report;
}

MetricsReport evaluate(const dual::DualViewModel<float>& model, const corpus::SplitCorpus& split,
                       const corpus::GroupTags& tags, std::uint64_t seed, std::size_t workers) {
  const auto tables = dual::item_tables(model);
  auto scorer = [&](UserId u, std::span<const ItemId> cand) {
    for (auto c : cand)
      if (c < 0 || c >= model.num_items()) throw DataError("unknown candidate item id " + std::to_string(c));
    const auto user = dual::represent(model, split.test_prefix(u));
    std::vector<float> scores(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) scores[i] = dual::score(user, cand[i], tables);
    return scores;
  };
  auto report = evaluate(split, model.num_items(), tags, seed, scorer, workers);
  report.config_hash = dual::config_hash(model.config);
  return report;
}

namespace {
std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}
}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = hex64(config_hash);
  j["seed"] = seed;
  nlohmann::ordered_json s = nlohmann::ordered_json::object();
  for (const auto& m : slices) s[m.name] = {{"h10", m.h10}, {"n10", m.n10}, {"count", m.count}};
  j["slices"] = s;
  nlohmann::ordered_json users = nlohmann::ordered_json::array();
  for (const auto& r : per_user)
    users.push_back({{"user", r.user},
                     {"target", r.target},
                     {"rank", r.rank},
                     {"hit", r.hit},
                     {"ndcg", r.ndcg},
                     {"shortfall", r.shortfall}});
  j["per_user"] = users;
  return j.dump(1) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, m] : j.at("slices").items())
      r.slices.push_back({name, m.at("h10").get<double>(), m.at("n10").get<double>(), m.at("count").get<Index>()});
    for (const auto& u : j.at("per_user"))
      r.per_user.push_back({u.at("user").get<Index>(), u.at("target").get<Index>(), u.at("rank").get<Index>(),
                            u.at("hit").get<double>(), u.at("ndcg").get<double>(), u.at("shortfall").get<Index>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  write_text_atomic(path, report.to_json());
}

MetricsReport read_report(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return MetricsReport::from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace lesr::eval
