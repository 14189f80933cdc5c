#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lesr/cli/app.hpp"
#include "lesr/common/error.hpp"
#include "lesr/corpus/synth.hpp"
#include "lesr/distill/retrieval.hpp"
#include "lesr/evalkit/aggregate.hpp"
#include "lesr/evalkit/metrics.hpp"
#include "lesr/numerics/linalg.hpp"

namespace py = pybind11;
using namespace lesr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

FloatArray to_numpy(const semantic::EmbeddingTable& t) {
  FloatArray out({t.count, t.dim});
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

semantic::EmbeddingTable from_numpy(const FloatArray& a, semantic::EntityKind kind) {
  if (a.ndim() != 2) throw ParameterError("expected a 2-D array of embeddings");
  semantic::EmbeddingTable t(kind, a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), t.values.begin());
  return t;
}

py::tuple run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lesr");
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

py::dict synth(num::Index users, num::Index items, num::Index clusters, double zipf, double mean_len,
               num::Index d_llm, std::uint64_t seed) {
  const corpus::SynthConfig cfg{.n_users = users, .n_items = items, .n_clusters = clusters, .zipf_s = zipf,
                                .mean_len = mean_len, .d_llm = d_llm};
  const auto data = corpus::synth_generate(cfg, seed);
  py::dict d;
  d["sequences"] = data.corpus.sequences;
  d["popularity"] = data.corpus.popularity;
  d["item_embeddings"] = to_numpy(data.item_embeddings);
  d["user_embeddings"] = to_numpy(data.user_embeddings);
  d["item_cluster"] = data.item_cluster;
  d["user_cluster"] = data.user_cluster;
  return d;
}

std::vector<std::vector<std::uint32_t>> retrieve(const FloatArray& users, num::Index n) {
  const auto table = from_numpy(users, semantic::EntityKind::kUser);
  const auto index = distill::build_index(table, n);
  const auto sets = distill::retrieve_all(index);
  std::vector<std::vector<std::uint32_t>> out;
  for (num::Index u = 0; u < sets.count; ++u) {
    const auto s = sets.of(u);
    out.emplace_back(s.begin(), s.end());
  }
  return out;
}

DoubleArray softmax_rows(const DoubleArray& x) {
  if (x.ndim() != 2) throw ParameterError("softmax_rows expects a 2-D array");
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      x.data(), x.shape(0), x.shape(1));
  const num::MatD p = num::softmax_rows(num::MatD(m));
  DoubleArray out({x.shape(0), x.shape(1)});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.mutable_data(), p.rows(),
                                                                                      p.cols()) = p;
  return out;
}

}  // namespace

PYBIND11_MODULE(_lesr, m) {
  m.doc() = "Dual-view long-tail sequential recommendation toolkit";
  m.attr("__version__") = cli::kToolVersion;

  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  m.def("run_cli", &run_cli, py::arg("args"),
        "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
  m.def("synth", &synth, py::arg("users") = 2000, py::arg("items") = 500, py::arg("clusters") = 8,
        py::arg("zipf") = 1.2, py::arg("mean_len") = 12.0, py::arg("d_llm") = 32, py::arg("seed") = 42,
        "Generates a clustered long-tail corpus with item and user embeddings.");
  m.def("head_count", [](num::Index n) { return corpus::head_count(n); }, py::arg("n"),
        "Size of the popular head: ceil(0.2 n).");
  m.def("retrieve", &retrieve, py::arg("user_embeddings"), py::arg("n") = 10,
        "Top-n most cosine-similar other users for every row.");
  m.def("softmax_rows", &softmax_rows, py::arg("x"));
  m.def(
      "metrics_at_10",
      [](num::Index rank) {
        const auto r = eval::metrics_at_10(rank);
        return py::make_tuple(r.hit, r.ndcg);
      },
      py::arg("rank"), "(H@10, N@10) for the 1-based rank of the target among 101 candidates.");
  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto t = eval::welch_t_test(a, b);
        py::dict d;
        d["t"] = t.t;
        d["df"] = t.df;
        d["p"] = t.p;
        d["significant"] = t.significant;
        return d;
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "read_report", [](const std::string& path) { return eval::read_report(path).to_json(); }, py::arg("path"),
      "Validated metrics report as JSON text.");
}
