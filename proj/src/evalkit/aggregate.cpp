#include "lesr/evalkit/aggregate.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lesr/common/error.hpp"

namespace lesr::eval {

Stat mean_std(std::span<const double> values) {
  if (values.empty()) throw ParameterError("mean_std: no values");
  Stat s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ParameterError("t-test needs at least two values per sample");
  const auto sa = mean_std(a);
  const auto sb = mean_std(b);
  const double va = sa.std * sa.std / static_cast<double>(a.size());
  const double vb = sb.std * sb.std / static_cast<double>(b.size());
  TTest r;
  const double diff = sa.mean - sb.mean;
  if (va + vb == 0.0) {
    r.df = static_cast<double>(a.size() + b.size() - 2);
    if (diff == 0.0) return r;
    r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    r.significant = true;
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  r.significant = r.p < 0.05;
  return r;
}

const SliceSummary& Summary::slice(std::string_view name) const {
  for (const auto& s : slices)
    if (s.slice == name) return s;
  throw ParameterError("summary has no slice '" + std::string(name) + "'");
}

namespace {

std::vector<double> column(std::span<const MetricsReport> reports, std::size_t slice, bool ndcg) {
  std::vector<double> out;
  for (const auto& r : reports) out.push_back(ndcg ? r.slices[slice].n10 : r.slices[slice].h10);
  return out;
}

void check_slices(std::span<const MetricsReport> reports, const MetricsReport& ref) {
  for (const auto& r : reports) {
    if (r.slices.size() != ref.slices.size()) throw ParameterError("reports have mismatched slice sets");
    for (std::size_t i = 0; i < r.slices.size(); ++i)
      if (r.slices[i].name != ref.slices[i].name) throw ParameterError("reports have mismatched slice sets");
  }
}

}  // namespace

Summary aggregate_seeds(std::span<const MetricsReport> system, std::span<const MetricsReport> baseline) {
  if (system.size() < 2) throw ParameterError("aggregate_seeds needs at least two reports per system");
  if (!baseline.empty() && baseline.size() < 2) throw ParameterError("aggregate_seeds needs at least two baseline reports");
  check_slices(system, system.front());
  check_slices(baseline, system.front());
  Summary out;
  out.has_baseline = !baseline.empty();
  for (std::size_t i = 0; i < system.front().slices.size(); ++i) {
    SliceSummary s;
    s.slice = system.front().slices[i].name;
    const auto h = column(system, i, false);
    const auto n = column(system, i, true);
    s.h10 = mean_std(h);
    s.n10 = mean_std(n);
    if (out.has_baseline) {
      const auto bh = column(baseline, i, false);
      const auto bn = column(baseline, i, true);
      s.base_h10 = mean_std(bh);
      s.base_n10 = mean_std(bn);
      s.h10_test = welch_t_test(h, bh);
      s.n10_test = welch_t_test(n, bn);
    }
    out.slices.push_back(s);
  }
  return out;
}

std::string format_table(std::span<const TableRow> rows) {
  static const char* kCols[] = {"overall", "tail_item", "head_item", "tail_user", "head_user"};
  static const char* kTitles[] = {"Overall", "Tail Item", "Head Item", "Tail User", "Head User"};
  std::size_t name_w = 5;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::string out;
  char buf[64];
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  out += pad("Model", name_w);
  for (auto* t : kTitles) out += " | " + pad(t, 17);
  out += "\n" + pad("", name_w);
  for (std::size_t i = 0; i < 5; ++i) out += " | " + pad("H@10", 8) + " " + pad("N@10", 8);
  out += "\n" + std::string(name_w, '-');
  for (std::size_t i = 0; i < 5; ++i) out += "-+-" + std::string(17, '-');
  out += "\n";
  for (const auto& r : rows) {
    out += pad(r.name, name_w);
    for (auto* c : kCols) {
      const auto& s = r.summary.slice(c);
      std::snprintf(buf, sizeof buf, "%.4f%s", s.h10.mean, r.summary.has_baseline && s.h10_test.significant ? "*" : "");
      out += " | " + pad(buf, 8);
      std::snprintf(buf, sizeof buf, "%.4f%s", s.n10.mean, r.summary.has_baseline && s.n10_test.significant ? "*" : "");
      out += " " + pad(buf, 8);
    }
    out += "\n";
  }
  return out;
}

}  // namespace lesr::eval
