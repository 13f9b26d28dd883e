#pragma once

#include <cstdint>
#include <string>

#include "msdetr/dataset.hpp"
#include "msdetr/decoder.hpp"
#include "msdetr/encoder.hpp"
#include "msdetr/metrics.hpp"
#include "msdetr/saliency_head.hpp"

namespace msdetr {

/// guided: decoder queries come from the top-K salient clips; learned: a
/// free K x d embedding (the randomly initialised query baseline).
enum class QueryMode { guided, learned };

struct ModelConfig {
  ModelDims dims;
  InputDims inputs;
  int K = 10;
  QueryMode query_mode = QueryMode::guided;

  void validate() const;
};

struct ForwardResult {
  EncoderOutput encoder;
  Var scores;  // L x 1 raw salience
  GuidedQueries guided;
  QueryBatch queries;
  DecoderOutput decoder;
};

struct Prediction {
  RankedPredictions ranked;
  std::vector<double> clip_scores;
};

class MsDetr {
 public:
  MsDetr(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Full pass; `dn` may be null or empty (no denoise rows).
  ForwardResult forward(Graph& g, const Mat& motion, const Mat& semantic, const Mat& text, const DenoiseSet* dn,
                        RunContext& ctx) const;

  /// Encoder and salience only (negative pairs).
  Var salience(Graph& g, const Mat& motion, const Mat& semantic, const Mat& text, RunContext& ctx) const;

  /// Inference without denoise rows and without dropout.
  Prediction predict(const Example& ex) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  MsdeEncoder encoder_;
  SaliencyHead saliency_;
  MtcdDecoder decoder_;
  ParamId query_embed_;
};

/// Turns raw (center, span) rows into spans clipped to [0, 1].
MomentSpan clip_prediction(double center, double span);

std::string to_string(QueryMode mode);
QueryMode query_mode_from_string(const std::string& s);

}  // namespace msdetr
