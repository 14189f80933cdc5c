#include "lesr/semantic/prompts.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "lesr/common/binary_io.hpp"
#include "lesr/common/error.hpp"

namespace lesr::semantic {

namespace {

std::string attr(const corpus::Attributes& a, const char* key) {
  auto it = a.find(key);
  return it == a.end() || it->second.empty() ? std::string("unknown") : it->second;
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "yelp") return DatasetKind::kYelp;
  if (name == "fashion") return DatasetKind::kFashion;
  if (name == "beauty") return DatasetKind::kBeauty;
  throw ParameterError("unknown dataset kind '" + std::string(name) + "' (expected yelp, fashion or beauty)");
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kYelp: return "yelp";
    case DatasetKind::kFashion: return "fashion";
    case DatasetKind::kBeauty: return "beauty";
  }
  return "unknown";
}

std::string render_item_prompt(const corpus::Attributes& a, DatasetKind kind) {
  std::string s;
  switch (kind) {
    case DatasetKind::kYelp:
      s = "The point of interest has the following attributes:\n";
      s += "name is " + attr(a, "name") + "; category is " + attr(a, "category") + "; type is " + attr(a, "type") +
           "; open status is " + attr(a, "open") + "; review count is " + attr(a, "count") + "; city is " +
           attr(a, "city") + "; average score is " + attr(a, "stars") + ".";
      return s;
    case DatasetKind::kFashion:
      s = "The fashion item has the following attributes:\n";
      s += "name is " + attr(a, "title") + "; brand is " + attr(a, "brand") + "; score is " + attr(a, "date") +
           "; price is " + attr(a, "price") + ".\n";
      s += "The item has the following features: " + attr(a, "feature") + ".\n";
      s += "The item has the following descriptions: " + attr(a, "description") + ".";
      return s;
    case DatasetKind::kBeauty:
      s = "The beauty item has the following attributes:\n";
      s += "name is " + attr(a, "title") + "; brand is " + attr(a, "brand") + "; price is " + attr(a, "price") +
           ".\n";
      s += "The item has the following features: " + attr(a, "categories") + ".\n";
      s += "The item has the following descriptions: " + attr(a, "description") + ".";
      return s;
  }
  throw ParameterError("unknown dataset kind");
}

std::string item_title(const corpus::Attributes& a) {
  for (const char* key : {"title", "name"}) {
    auto it = a.find(key);
    if (it != a.end() && !it->second.empty()) return it->second;
  }
  return "unknown";
}

std::string render_user_prompt(std::span<const corpus::ItemId> sequence, std::span<const corpus::Attributes> catalog,
                               std::size_t max_titles) {
  if (sequence.empty()) throw ParameterError("render_user_prompt: empty sequence");
  if (max_titles == 0) throw ParameterError("render_user_prompt: max_titles must be positive");
  const auto recent = sequence.size() > max_titles ? sequence.last(max_titles) : sequence;
  std::string s = "The user has visited the following items:\n";
  bool first = true;
  for (auto v : recent) {
    if (!first) s += ", ";
    first = false;
    s += v >= 0 && static_cast<std::size_t>(v) < catalog.size() ? item_title(catalog[static_cast<std::size_t>(v)])
                                                                 : std::string("unknown");
  }
  s += ",\nplease conclude the user's preference.";
  return s;
}

std::size_t count_code_points(std::string_view utf8) {
  std::size_t n = 0;
  for (unsigned char c : utf8)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::vector<PromptRecord> build_prompts(const corpus::Corpus& corpus, DatasetKind kind, std::size_t max_titles) {
  std::vector<PromptRecord> out;
  out.reserve(static_cast<std::size_t>(corpus.num_items() + corpus.num_users()));
  for (corpus::ItemId v = 0; v < corpus.num_items(); ++v) {
    auto text = render_item_prompt(corpus.item_attributes[static_cast<std::size_t>(v)], kind);
    out.push_back({EntityKind::kItem, v, text, count_code_points(text)});
  }
  const corpus::SplitCorpus split(corpus);
  for (corpus::UserId u = 0; u < corpus.num_users(); ++u) {
    auto text = render_user_prompt(split.train(u), corpus.item_attributes, max_titles);
    out.push_back({EntityKind::kUser, u, text, count_code_points(text)});
  }
  return out;
}

void write_prompts(const std::vector<PromptRecord>& records, const std::filesystem::path& path) {
  std::ostringstream os;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(r.kind);
    j["id"] = r.id;
    j["text"] = r.text;
    j["chars"] = r.chars;
    os << j.dump() << '\n';
  }
  write_text_atomic(path, os.str());
}

std::vector<PromptRecord> read_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prompts file " + path.string());
  std::vector<PromptRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      PromptRecord r;
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "item" && kind != "user") throw DataError("bad kind '" + kind + "'");
      r.kind = kind == "item" ? EntityKind::kItem : EntityKind::kUser;
      r.id = j.at("id").get<corpus::Index>();
      r.text = j.at("text").get<std::string>();
      r.chars = count_code_points(r.text);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lesr::semantic
