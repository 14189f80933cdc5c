#include "lesr/common/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace lesr {

static_assert(std::endian::native == std::endian::little, "snapshot formats assume a little-endian host");

const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::kOpenFailed: return "open-failed";
    case FormatErrc::kBadMagic: return "bad-magic";
    case FormatErrc::kBadVersion: return "bad-version";
    case FormatErrc::kTruncated: return "truncated";
    case FormatErrc::kChecksum: return "checksum-mismatch";
    case FormatErrc::kInconsistent: return "inconsistent-header";
  }
  return "unknown";
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::kOpenFailed, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::kOpenFailed, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::kOpenFailed, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void expect_header(ByteReader& in, std::string_view magic, std::uint32_t version) {
  if (in.remaining() < magic.size()) throw FormatError(FormatErrc::kTruncated, "file shorter than header");
  if (in.bytes(magic.size()) != magic)
    throw FormatError(FormatErrc::kBadMagic, "expected magic " + std::string(magic));
  const auto v = in.u32();
  if (v != version)
    throw FormatError(FormatErrc::kBadVersion,
                      "version " + std::to_string(v) + ", expected " + std::to_string(version));
}

void expect_checksum(std::span<const std::uint8_t> data, std::size_t from) {
  if (data.size() < from + 8) throw FormatError(FormatErrc::kTruncated, "missing checksum");
  const auto body = data.subspan(from, data.size() - 8 - from);
  std::uint64_t stored;
  std::memcpy(&stored, data.data() + data.size() - 8, 8);
  if (fnv1a(body) != stored) throw FormatError(FormatErrc::kChecksum, "payload checksum does not match");
}

}  // namespace lesr
