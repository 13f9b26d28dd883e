#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "msdetr/feature_store.hpp"
#include "msdetr/synthetic_corpus.hpp"

namespace msdetr {

/// One (video, query) pair with features widened to double.
struct Example {
  std::string qid;
  std::string vid;
  Mat motion;    // L x d_m
  Mat semantic;  // L x d_s
  Mat text;      // M x d_t
  std::vector<MomentSpan> windows;
  std::vector<int> labels;
  Polarity polarity = Polarity::positive;
  double duration_s = 0.0;

  int num_clips() const { return static_cast<int>(motion.rows()); }
  bool positive() const { return polarity == Polarity::positive; }
};

struct Dataset {
  std::vector<Example> examples;

  std::vector<int> positives() const;
  const Example* find(const std::string& qid) const;
  bool empty() const { return examples.empty(); }
};

Example make_example(const VideoRecord& video, const AnnotationRecord& annotation);

/// Loads and validates a manifest; throws ValidationError listing every issue.
Dataset load_split(const std::filesystem::path& manifest);

Dataset dataset_from_samples(const std::vector<SyntheticSample>& samples);

/// train.jsonl (required), val.jsonl and aux.jsonl (optional) under `dir`.
struct DataDir {
  std::filesystem::path root;
  Dataset train;
  Dataset val;
  Dataset aux;

  /// "train", "val" or "aux"; throws InputError for other names.
  const Dataset& split(const std::string& name) const;
};

/// Throws IOError when `dir` or its train.jsonl is missing.
DataDir load_data_dir(const std::filesystem::path& dir);

}  // namespace msdetr
