#include <string>
#include <vector>

#include "lesr/common/error.hpp"
#include "lesr/trainer/trainer.hpp"

namespace lesr::train {

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"w/o Co-view", "w/o Se-view",     "w/o SD",      "w/o Share",
                                              "w/o CA",      "1-layer Adapter", "Random Init", "LLMInit"};
  return names;
}

TrainConfig run_ablation(std::string_view variant, const TrainConfig& base) {
  TrainConfig c = base;
  auto& f = c.flags;
  if (variant == "w/o Co-view") {
    f.co_view = false;
  } else if (variant == "w/o Se-view") {
    f.se_view = false;
  } else if (variant == "w/o SD") {
    c.alpha = 0.0;
  } else if (variant == "w/o Share") {
    f.share_encoder = false;
  } else if (variant == "w/o CA") {
    f.cross_attention = false;
  } else if (variant == "1-layer Adapter") {
    f.adapter_layers = 1;
  } else if (variant == "Random Init") {
    f.init_mode = dual::InitMode::kRandom;
  } else if (variant == "LLMInit") {
    // Collaborative-only baseline: PCA-initialized table, no semantic
    // branch, no distillation.
    f.se_view = false;
    f.init_mode = dual::InitMode::kPca;
    c.alpha = 0.0;
  } else {
    std::string valid;
    for (const auto& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + ("'" + n + "'");
    throw ParameterError("unknown ablation variant '" + std::string(variant) + "'; valid: " + valid);
  }
  return c;
}

}  // namespace lesr::train
