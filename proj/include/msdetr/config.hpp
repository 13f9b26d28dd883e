#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "msdetr/denoise.hpp"
#include "msdetr/losses.hpp"
#include "msdetr/model.hpp"
#include "msdetr/synthetic_corpus.hpp"

namespace msdetr {

using json = nlohmann::ordered_json;

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class NegativeStrategy { none, in_batch };

struct TrainConfig {
  ModelDims dims;
  int K = 10;
  QueryMode query_mode = QueryMode::guided;
  LossWeights loss;
  NoiseConfig noise;
  OptimConfig optim;
  int batch_size = 8;
  int epochs = 100;
  /// Evaluate (and possibly checkpoint) every this many epochs; 0 = only at the end.
  int eval_interval = 10;
  std::uint64_t seed = 0;
  /// Probability that a batch is drawn from the auxiliary positives.
  double aux_ratio = 0.3;
  NegativeStrategy negatives = NegativeStrategy::in_batch;
  /// Probability that a negative pair uses a generated hard negative of the
  /// same video instead of another sample's text.
  double hard_negative_ratio = 0.5;
  /// Split used for periodic evaluation; falls back to train when absent.
  std::string eval_split = "val";

  void validate() const;
  ModelConfig model_config(const InputDims& inputs) const;
};

json to_json(const TrainConfig& c);
/// Missing keys keep defaults; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const json& j);

json to_json(const GenerationConfig& c);
GenerationConfig generation_config_from_json(const json& j);

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

/// Reads a JSON document; an empty path yields an empty object.
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

/// Applies "--a.b.c=value" style overrides (leading dashes optional).
/// Values parse as JSON when possible, else as strings. Throws ConfigError
/// on malformed entries.
void apply_overrides(json& j, const std::vector<std::string>& overrides);

}  // namespace msdetr
