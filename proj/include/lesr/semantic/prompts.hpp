#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesr/corpus/corpus.hpp"
#include "lesr/semantic/table.hpp"

namespace lesr::semantic {

enum class DatasetKind { kYelp, kFashion, kBeauty };

DatasetKind parse_dataset_kind(std::string_view name);
const char* to_string(DatasetKind kind);

inline constexpr std::size_t kDefaultMaxTitles = 30;

// Item template per dataset. Missing attributes render as "unknown".
//   yelp:    name category type open count city stars
//   fashion: title brand date price feature description
//   beauty:  title brand price categories description
std::string render_item_prompt(const corpus::Attributes& attributes, DatasetKind kind);

// Title used for an item in user prompts: "title", else "name", else "unknown".
std::string item_title(const corpus::Attributes& attributes);

// User template over the most recent max_titles items of `sequence`.
std::string render_user_prompt(std::span<const corpus::ItemId> sequence,
                               std::span<const corpus::Attributes> catalog, std::size_t max_titles = kDefaultMaxTitles);

struct PromptRecord {
  EntityKind kind = EntityKind::kItem;
  corpus::Index id = 0;
  std::string text;
  std::size_t chars = 0;  // Unicode code points

  bool operator==(const PromptRecord&) const = default;
};

std::size_t count_code_points(std::string_view utf8);

// One record per item, then one per user (built from the training prefix).
std::vector<PromptRecord> build_prompts(const corpus::Corpus& corpus, DatasetKind kind,
                                        std::size_t max_titles = kDefaultMaxTitles);

void write_prompts(const std::vector<PromptRecord>& records, const std::filesystem::path& path);
std::vector<PromptRecord> read_prompts(const std::filesystem::path& path);

}  // namespace lesr::semantic
