#pragma once

#include <span>
#include <string>
#include <vector>

#include "lesr/evalkit/metrics.hpp"

namespace lesr::eval {

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

Stat mean_std(std::span<const double> values);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;  // p < 0.05
};

// Welch's two-sided t-test. Both samples need at least two values.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

struct SliceSummary {
  std::string slice;
  Stat h10, n10;
  Stat base_h10, base_n10;
  TTest h10_test, n10_test;
};

struct Summary {
  std::vector<SliceSummary> slices;
  bool has_baseline = false;
  const SliceSummary& slice(std::string_view name) const;
};

// Per-slice mean and sample std over seeds; with baseline reports, Welch's
// test of system vs baseline per slice and metric.
Summary aggregate_seeds(std::span<const MetricsReport> system, std::span<const MetricsReport> baseline = {});

struct TableRow {
  std::string name;
  Summary summary;
};

// Text table: Overall | Tail Item | Head Item | Tail User | Head User, each
// with H@10 and N@10. A trailing '*' marks p < 0.05 against the baseline.
std::string format_table(std::span<const TableRow> rows);

}  // namespace lesr::eval
