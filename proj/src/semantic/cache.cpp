#include "lesr/semantic/cache.hpp"

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"
#include "lesr/numerics/linalg.hpp"

namespace lesr::semantic {

namespace {
constexpr std::string_view kCacheMagic = "LESREMB1";
}

const char* to_string(EntityKind kind) { return kind == EntityKind::kItem ? "item" : "user"; }

num::MatF EmbeddingTable::as_matrix() const {
  num::MatF m(count, dim);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::uint64_t EmbeddingTable::checksum() const {
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(values.data()), values.size() * sizeof(float)));
}

void write_cache(const EmbeddingTable& table, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(table.count * table.dim) != table.values.size())
    throw ParameterError("write_cache: table shape does not match its payload");
  ByteWriter w;
  w.bytes(kCacheMagic);
  w.u32(kCacheVersion);
  w.u8(static_cast<std::uint8_t>(table.kind));
  w.u32(static_cast<std::uint32_t>(table.count));
  w.u32(static_cast<std::uint32_t>(table.dim));
  const auto payload = w.size();
  w.f32s(table.values);
  w.u64(w.checksum_from(payload));
  write_file_atomic(path, w.buffer());
}

EmbeddingTable read_cache(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  ByteReader in(data);
  expect_header(in, kCacheMagic, kCacheVersion);
  const auto kind = in.u8();
  const auto count = in.u32();
  const auto dim = in.u32();
  if (kind > 1) throw FormatError(FormatErrc::kInconsistent, "entity kind byte " + std::to_string(kind));
  const std::uint64_t expected = static_cast<std::uint64_t>(count) * dim * sizeof(float) + 8;
  if (in.remaining() < expected)
    throw FormatError(FormatErrc::kTruncated, "payload shorter than count×dim declared in the header");
  if (in.remaining() > expected)
    throw FormatError(FormatErrc::kInconsistent, "payload longer than count×dim declared in the header");
  expect_checksum(data, in.pos());

  EmbeddingTable t(static_cast<EntityKind>(kind), count, dim);
  in.f32s(t.values);
  return t;
}

CollabInit init_collab_from_semantic(const EmbeddingTable& items, num::Index d) {
  auto pca = num::pca_reduce(items.as_matrix().cast<double>(), d);
  return {pca.projection.cast<float>(), "pca-init", pca.zero_variance};
}

}  // namespace lesr::semantic
