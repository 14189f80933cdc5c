#include "lesr/dualview/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "lesr/common/binary_io.hpp"

namespace lesr::dual {

namespace {

constexpr std::string_view kMagic = "LESRCKPT";

void write_config(ByteWriter& out, const ModelConfig& c) {
  out.u32(static_cast<std::uint32_t>(c.dim));
  out.u32(static_cast<std::uint32_t>(c.max_len));
  out.u8(static_cast<std::uint8_t>(c.backbone));
  out.f64(c.dropout);
  const auto& f = c.flags;
  for (bool b : {f.co_view, f.se_view, f.share_encoder, f.cross_attention}) out.u8(b ? 1 : 0);
  out.u8(static_cast<std::uint8_t>(f.adapter_layers));
  out.u8(static_cast<std::uint8_t>(f.init_mode));
  out.u8(f.residual_fusion ? 1 : 0);
  out.u8(f.causal_fusion ? 1 : 0);
}

bool flag(ByteReader& in) {
  const auto v = in.u8();
  if (v > 1) throw FormatError(FormatErrc::kInconsistent, "bad flag byte in checkpoint config");
  return v == 1;
}

ModelConfig read_config(ByteReader& in) {
  ModelConfig c;
  c.dim = in.u32();
  c.max_len = in.u32();
  const auto backbone = in.u8();
  if (backbone > 1) throw FormatError(FormatErrc::kInconsistent, "unknown backbone in checkpoint");
  c.backbone = static_cast<enc::EncoderKind>(backbone);
  c.dropout = in.f64();
  auto& f = c.flags;
  f.co_view = flag(in);
  f.se_view = flag(in);
  f.share_encoder = flag(in);
  f.cross_attention = flag(in);
  f.adapter_layers = in.u8();
  const auto init = in.u8();
  if (init > 1) throw FormatError(FormatErrc::kInconsistent, "unknown init mode in checkpoint");
  f.init_mode = static_cast<InitMode>(init);
  f.residual_fusion = flag(in);
  f.causal_fusion = flag(in);
  return c;
}

}  // namespace

std::string describe(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "dim=" << c.dim << "\n"
     << "max_len=" << c.max_len << "\n"
     << "backbone=" << enc::to_string(c.backbone) << "\n"
     << "dropout=" << c.dropout << "\n"
     << "co_view=" << c.flags.co_view << "\n"
     << "se_view=" << c.flags.se_view << "\n"
     << "share_encoder=" << c.flags.share_encoder << "\n"
     << "cross_attention=" << c.flags.cross_attention << "\n"
     << "adapter_layers=" << c.flags.adapter_layers << "\n"
     << "init=" << to_string(c.flags.init_mode) << "\n"
     << "residual_fusion=" << c.flags.residual_fusion << "\n"
     << "causal_fusion=" << c.flags.causal_fusion << "\n";
  return os.str();
}

std::uint64_t config_hash(const ModelConfig& config) { return fnv1a(describe(config)); }

std::vector<std::uint8_t> serialize_checkpoint(const DualViewModel<float>& m) {
  ByteWriter out;
  out.bytes(kMagic);
  out.u32(kCheckpointVersion);
  const auto payload = out.size();
  write_config(out, m.config);
  out.u32(static_cast<std::uint32_t>(m.llm_dim));
  out.u32(static_cast<std::uint32_t>(m.num_items()));
  out.str(m.collab_provenance);
  out.u64(config_hash(m.config));
  const auto params = m.parameters();
  out.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    out.str(p->name);
    out.u32(static_cast<std::uint32_t>(p->values.rows()));
    out.u32(static_cast<std::uint32_t>(p->values.cols()));
    out.f32s(std::span(p->values.data(), static_cast<std::size_t>(p->values.size())));
  }
  out.u64(out.checksum_from(payload));
  return out.buffer();
}

namespace {

// Trailing bytes are a size problem, like truncation, not content damage.
constexpr const char* kTrailing = "trailing bytes after parameters";

DualViewModel<float> parse_checkpoint(ByteReader& in) {
  auto config = read_config(in);
  const Index llm_dim = in.u32();
  const Index items = in.u32();
  auto provenance = in.str();
  const auto hash = in.u64();
  if (hash != config_hash(config)) throw FormatError(FormatErrc::kInconsistent, "config hash does not match config");
  if (config.flags.adapter_layers != 1 && config.flags.adapter_layers != 2)
    throw FormatError(FormatErrc::kInconsistent, "bad adapter layer count");
  if (config.dim < 1 || config.max_len < 1 || llm_dim < 1 || items < 1 ||
      (!config.flags.se_view && !config.flags.co_view))
    throw FormatError(FormatErrc::kInconsistent, "invalid model shape in checkpoint");

  auto m = make_model_skeleton<float>(config, items, llm_dim, 0);
  m.collab_provenance = std::move(provenance);
  auto params = m.parameters();
  const auto count = in.u32();
  if (count != params.size()) throw FormatError(FormatErrc::kInconsistent, "parameter group count differs");
  for (auto* p : params) {
    const auto name = in.str();
    const Index rows = in.u32();
    const Index cols = in.u32();
    if (name != p->name || rows != p->values.rows() || cols != p->values.cols())
      throw FormatError(FormatErrc::kInconsistent, "unexpected parameter group '" + name + "'");
    in.f32s(std::span(p->values.data(), static_cast<std::size_t>(p->values.size())));
  }
  if (in.remaining() < 8) throw FormatError(FormatErrc::kTruncated, "missing checksum");
  if (in.remaining() > 8) throw FormatError(FormatErrc::kInconsistent, kTrailing);
  return m;
}

}  // namespace

DualViewModel<float> deserialize_checkpoint(std::span<const std::uint8_t> data) {
  ByteReader in(data);
  expect_header(in, kMagic, kCheckpointVersion);
  const auto payload = in.pos();
  try {
    expect_checksum(data, payload);
  } catch (const FormatError& bad_sum) {
    // Size problems are reported as such; any other damage is a checksum failure.
    try {
      parse_checkpoint(in);
    } catch (const FormatError& e) {
      if (e.code() == FormatErrc::kTruncated || std::string_view(e.what()).ends_with(kTrailing)) throw;
    }
    throw;
  }
  return parse_checkpoint(in);
}

void write_checkpoint(const DualViewModel<float>& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

DualViewModel<float> read_checkpoint(const std::filesystem::path& path) {
  const auto data = read_file_bytes(path);
  return deserialize_checkpoint(data);
}

bool bitwise_equal(const DualViewModel<float>& a, const DualViewModel<float>& b) {
  if (!(a.config == b.config) || a.llm_dim != b.llm_dim || a.collab_provenance != b.collab_provenance) return false;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto& x = pa[i]->values;
    const auto& y = pb[i]->values;
    if (pa[i]->name != pb[i]->name || x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace lesr::dual
