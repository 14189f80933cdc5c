#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lesr/semantic/table.hpp"

namespace lesr::semantic {

using Vector = std::vector<float>;

// Connection settings for an embedding endpoint, read from a flat key-value
// file (keys: url, model, auth_env, batch_size, concurrency, retries,
// backoff_ms). Unknown keys are rejected.
struct EndpointConfig {
  std::string url;
  std::string model = "text-embedding-ada-002";
  std::string auth_env = "LESR_EMBED_TOKEN";
  std::size_t batch_size = 64;
  std::size_t concurrency = 4;
  int retries = 3;  // total attempts per batch
  int backoff_ms = 200;

  static EndpointConfig load(const std::filesystem::path& path);
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One vector per input text, in input order. Throws TransientError for
  // failures worth retrying. Must be safe to call from several threads.
  virtual std::vector<Vector> embed(std::span<const std::string> texts) = 0;
};

// Deterministic offline provider: each text maps to a unit vector drawn from
// a generator seeded by hash(seed, text).
class MockProvider : public EmbeddingProvider {
 public:
  MockProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  std::vector<Vector> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// JSON-over-HTTP provider. Request: {"model": ..., "input": [...]};
// response: {"data": [{"embedding": [...], "index": i?}, ...]}.
// HTTP 429/5xx and connection failures are transient.
class HttpProvider : public EmbeddingProvider {
 public:
  explicit HttpProvider(EndpointConfig config);
  std::vector<Vector> embed(std::span<const std::string> texts) override;

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string token_;
};

class FetchError : public std::runtime_error {
 public:
  FetchError(const std::string& what, std::size_t batch) : std::runtime_error(what), batch_(batch) {}
  std::size_t batch_index() const { return batch_; }

 private:
  std::size_t batch_;
};

struct FetchOptions {
  std::size_t batch_size = 64;
  std::size_t concurrency = 4;
  int attempts = 3;
  int backoff_ms = 200;
};

struct FetchStats {
  std::size_t requests = 0;  // provider calls, including retries
  std::size_t batches = 0;
  std::size_t dim = 0;
};

// Splits texts into batches, keeps up to `concurrency` batches in flight,
// retries transient failures with exponential backoff, and reassembles the
// vectors in input order. The dimension of the first vector is enforced on
// every other vector.
std::vector<Vector> fetch_embeddings(std::span<const std::string> texts, EmbeddingProvider& provider,
                                     const FetchOptions& options = {}, FetchStats* stats = nullptr);

EmbeddingTable to_table(EntityKind kind, const std::vector<Vector>& vectors);

}  // namespace lesr::semantic
