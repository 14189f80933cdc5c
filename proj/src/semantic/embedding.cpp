#include "lesr/semantic/embedding.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <thread>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/common/random.hpp"

namespace lesr::semantic {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

EndpointConfig EndpointConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open endpoint config " + path.string());
  EndpointConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto val = trim(line.substr(eq + 1));
    try {
      if (key == "url") c.url = val;
      else if (key == "model") c.model = val;
      else if (key == "auth_env") c.auth_env = val;
      else if (key == "batch_size") c.batch_size = std::stoul(val);
      else if (key == "concurrency") c.concurrency = std::stoul(val);
      else if (key == "retries") c.retries = std::stoi(val);
      else if (key == "backoff_ms") c.backoff_ms = std::stoi(val);
      else throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ParameterError*>(&e)) throw;
      throw ParameterError(path.string() + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  if (c.batch_size == 0 || c.concurrency == 0 || c.retries < 1)
    throw ParameterError("endpoint config: batch_size, concurrency and retries must be positive");
  return c;
}

std::vector<Vector> MockProvider::embed(std::span<const std::string> texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    Rng rng(splitmix64(seed_ ^ fnv1a(t)));
    Vector v(dim_);
    double norm = 0;
    for (auto& x : v) {
      const double g = standard_normal(rng);
      x = static_cast<float>(g);
      norm += g * g;
    }
    const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (auto& x : v) x *= inv;
    out.push_back(std::move(v));
  }
  return out;
}

HttpProvider::HttpProvider(EndpointConfig config) : config_(std::move(config)) {
  const auto& url = config_.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ParameterError("endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (!config_.auth_env.empty())
    if (const char* tok = std::getenv(config_.auth_env.c_str())) token_ = tok;
}

std::vector<Vector> HttpProvider::embed(std::span<const std::string> texts) {
  nlohmann::json body;
  body["model"] = config_.model;
  body["input"] = std::vector<std::string>(texts.begin(), texts.end());

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransientError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientError("embedding endpoint returned HTTP " + std::to_string(res->status));
  if (res->status != 200) throw DataError("embedding endpoint returned HTTP " + std::to_string(res->status));

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("embedding response is not JSON: ") + e.what());
  }
  if (!j.contains("data") || !j["data"].is_array()) throw DataError("embedding response lacks a data array");
  const auto& data = j["data"];
  if (data.size() != texts.size())
    throw DataError("embedding response has " + std::to_string(data.size()) + " vectors for " +
                    std::to_string(texts.size()) + " inputs");
  std::vector<Vector> out(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t slot = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
    if (slot >= out.size() || !out[slot].empty()) throw DataError("embedding response has a bad index");
    out[slot] = data[i].at("embedding").get<Vector>();
  }
  return out;
}

std::vector<Vector> fetch_embeddings(std::span<const std::string> texts, EmbeddingProvider& provider,
                                     const FetchOptions& options, FetchStats* stats) {
  if (options.batch_size == 0 || options.concurrency == 0 || options.attempts < 1)
    throw ParameterError("fetch_embeddings: batch size, concurrency and attempts must be positive");
  const std::size_t n_batches = (texts.size() + options.batch_size - 1) / options.batch_size;
  std::vector<std::vector<Vector>> results(n_batches);
  std::atomic<std::size_t> requests{0};

  auto run_batch = [&](std::size_t b) {
    const auto begin = b * options.batch_size;
    const auto count = std::min(options.batch_size, texts.size() - begin);
    const auto chunk = texts.subspan(begin, count);
    for (int attempt = 0;; ++attempt) {
      ++requests;
      try {
        auto vecs = provider.embed(chunk);
        if (vecs.size() != count)
          throw DataError("provider returned " + std::to_string(vecs.size()) + " vectors for " +
                          std::to_string(count) + " inputs");
        results[b] = std::move(vecs);
        return;
      } catch (const TransientError& e) {
        if (attempt + 1 >= options.attempts)
          throw FetchError("batch " + std::to_string(b) + " failed after " + std::to_string(options.attempts) +
                               " attempts: " + e.what(),
                           b);
        std::this_thread::sleep_for(std::chrono::milliseconds(options.backoff_ms << attempt));
      }
    }
  };

  for (std::size_t wave = 0; wave < n_batches; wave += options.concurrency) {
    const auto end = std::min(n_batches, wave + options.concurrency);
    if (end - wave == 1) {
      run_batch(wave);
      continue;
    }
    std::vector<std::future<void>> inflight;
    for (std::size_t b = wave; b < end; ++b) inflight.push_back(std::async(std::launch::async, run_batch, b));
    std::exception_ptr first;
    for (auto& f : inflight) {
      try {
        f.get();
      } catch (...) {
        if (!first) first = std::current_exception();
      }
    }
    if (first) std::rethrow_exception(first);
  }

  std::vector<Vector> out;
  out.reserve(texts.size());
  std::size_t dim = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (auto& v : results[b]) {
      if (out.empty()) {
        dim = v.size();
        if (dim == 0) throw DataError("provider returned an empty embedding");
      } else if (v.size() != dim) {
        throw DataError("embedding dimension changed from " + std::to_string(dim) + " to " +
                        std::to_string(v.size()) + " in batch " + std::to_string(b));
      }
      out.push_back(std::move(v));
    }
  }
  if (stats) {
    stats->requests = requests.load();
    stats->batches = n_batches;
    stats->dim = dim;
  }
  return out;
}

EmbeddingTable to_table(EntityKind kind, const std::vector<Vector>& vectors) {
  if (vectors.empty()) throw DataError("no embeddings to tabulate");
  EmbeddingTable t(kind, static_cast<num::Index>(vectors.size()), static_cast<num::Index>(vectors[0].size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != static_cast<std::size_t>(t.dim)) throw DataError("ragged embedding rows");
    std::copy(vectors[i].begin(), vectors[i].end(), t.row(static_cast<num::Index>(i)).begin());
  }
  return t;
}

}  // namespace lesr::semantic
