#include "lesr/distill/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/parallel.hpp"

namespace lesr::distill {

namespace {
constexpr std::string_view kMagic = "LESRRETR";

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}
}  // namespace

SimilarUserIndex build_index(const semantic::EmbeddingTable& users, Index n) {
  if (n < 1) throw ParameterError("retrieval size N must be at least 1");
  if (n >= users.count)
    throw ParameterError("retrieval size N=" + std::to_string(n) + " needs more than N users (have " +
                         std::to_string(users.count) + ")");
  SimilarUserIndex index;
  index.base = &users;
  index.n = n;
  index.norms.resize(static_cast<std::size_t>(users.count));
  for (Index u = 0; u < users.count; ++u) {
    const auto row = users.row(u);
    index.norms[static_cast<std::size_t>(u)] = std::sqrt(dot(row, row));
  }
  return index;
}

double cosine(const SimilarUserIndex& index, UserId a, UserId b) {
  const double na = index.norms[static_cast<std::size_t>(a)];
  const double nb = index.norms[static_cast<std::size_t>(b)];
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(index.base->row(a), index.base->row(b)) / (na * nb);
}

std::vector<UserId> retrieve_similar(UserId k, const SimilarUserIndex& index) {
  const Index count = index.base->count;
  if (k < 0 || k >= count) throw ParameterError("unknown user id " + std::to_string(k));
  if (index.norms[static_cast<std::size_t>(k)] == 0.0)
    throw DomainError("degenerate user embedding (user " + std::to_string(k) + ")");

  std::vector<std::pair<double, UserId>> sims;
  sims.reserve(static_cast<std::size_t>(count - 1));
  for (UserId j = 0; j < count; ++j)
    if (j != k) sims.emplace_back(cosine(index, k, j), j);
  auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  std::partial_sort(sims.begin(), sims.begin() + index.n, sims.end(), better);
  std::vector<UserId> out(static_cast<std::size_t>(index.n));
  for (Index i = 0; i < index.n; ++i) out[static_cast<std::size_t>(i)] = sims[static_cast<std::size_t>(i)].second;
  return out;
}

RetrievalSets retrieve_all(const SimilarUserIndex& index, std::size_t workers) {
  RetrievalSets sets;
  sets.count = index.base->count;
  sets.n = index.n;
  sets.ids.resize(static_cast<std::size_t>(sets.count * sets.n));
  parallel_for(static_cast<std::size_t>(sets.count), workers, [&](std::size_t u) {
    const auto top = retrieve_similar(static_cast<UserId>(u), index);
    std::copy(top.begin(), top.end(), sets.ids.begin() + static_cast<std::ptrdiff_t>(u * sets.n));
  });
  return sets;
}

RetrievalSets truncate(const RetrievalSets& sets, Index n) {
  if (n < 1 || n > sets.n)
    throw DataError("retrieval sets hold " + std::to_string(sets.n) + " users per list, " + std::to_string(n) +
                    " requested; re-run `retrieve` with a larger --n");
  RetrievalSets out;
  out.count = sets.count;
  out.n = n;
  for (Index u = 0; u < sets.count; ++u) {
    const auto l = sets.of(u).first(static_cast<std::size_t>(n));
    out.ids.insert(out.ids.end(), l.begin(), l.end());
  }
  return out;
}

void write_retrieval(const RetrievalSets& sets, const std::filesystem::path& path) {
  ByteWriter out;
  out.bytes(kMagic);
  out.u32(kRetrievalVersion);
  const auto payload = out.size();
  out.u32(static_cast<std::uint32_t>(sets.count));
  out.u32(static_cast<std::uint32_t>(sets.n));
  for (auto id : sets.ids) out.u32(id);
  out.u64(out.checksum_from(payload));
  write_file_atomic(path, out.buffer());
}

RetrievalSets read_retrieval(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  ByteReader in(data);
  expect_header(in, kMagic, kRetrievalVersion);
  const auto payload = in.pos();
  RetrievalSets sets;
  sets.count = in.u32();
  sets.n = in.u32();
  const auto expected = static_cast<std::size_t>(sets.count * sets.n) * 4 + 8;
  if (in.remaining() < expected) throw FormatError(FormatErrc::kTruncated, "retrieval file shorter than its header");
  if (in.remaining() > expected) throw FormatError(FormatErrc::kInconsistent, "trailing bytes in retrieval file");
  expect_checksum(data, payload);
  sets.ids.resize(static_cast<std::size_t>(sets.count * sets.n));
  for (auto& id : sets.ids) {
    id = in.u32();
    if (id >= sets.count) throw FormatError(FormatErrc::kInconsistent, "user id out of range in retrieval file");
  }
  return sets;
}

}  // namespace lesr::distill
