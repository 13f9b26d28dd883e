#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msdetr/config.hpp"
#include "msdetr/dataset.hpp"
#include "msdetr/metrics.hpp"
#include "msdetr/model.hpp"

namespace msdetr {

/// Named loss terms of one step (batch means) plus the weighted total.
struct LossBreakdown {
  double hd = 0.0;
  double mr = 0.0;
  double dn = 0.0;
  double enc_neg = 0.0;
  double margin = 0.0;
  double enc_cont = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
};

struct StepLog {
  int step = 0;
  int epoch = 0;
  bool aux = false;
  LossBreakdown loss;
  double grad_norm = 0.0;
  double lr = 0.0;

  json to_json() const;
};

struct SampleLoss {
  Var total;
  LossBreakdown parts;
};

/// Loss of one positive pair. `negative_text`, when given, forms the negative
/// pair (same video, mismatched query) for the contrastive terms.
SampleLoss sample_loss(Graph& g, const MsDetr& model, const TrainConfig& cfg, const Example& ex,
                       const Mat* negative_text, Rng& rng, double dropout);

class AdamW {
 public:
  AdamW(const ParamStore& store, const OptimConfig& cfg);
  void step(ParamStore& store, const GradStore& grads);
  int steps() const { return t_; }

 private:
  OptimConfig cfg_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most `max_norm` (no-op
/// when max_norm <= 0); returns the norm before clipping.
double clip_grad_norm(GradStore& grads, double max_norm);

std::vector<QueryEval> collect_eval(const MsDetr& model, const Dataset& data);
/// Metrics over the positive pairs of `data`; throws InputError when there
/// are none.
MetricsReport evaluate(const MsDetr& model, const Dataset& data);

struct EvalLog {
  int epoch = 0;
  MetricsReport report;
};

struct TrainResult {
  MsDetr model;                  // parameters after the last step
  std::vector<Mat> best_params;  // snapshot with the best eval map_avg
  MetricsReport best_report;
  int best_epoch = -1;
  std::vector<StepLog> steps;
  std::vector<EvalLog> evals;

  MsDetr best_model() const;
};

struct TrainOptions {
  /// When set: train_log.jsonl, eval_log.jsonl, checkpoint/ (best) are written here.
  std::optional<std::filesystem::path> out_dir;
  std::ostream* progress = nullptr;
  /// Recorded in checkpoint metadata so later commands can find the data.
  std::string data_dir;
};

/// Throws InputError when the train split has no positives and
/// DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const DataDir& data, const TrainOptions& opts = {});

/// JSON-lines record: qid plus K ranked (start_s, end_s, score) triples and
/// the per-clip salience scores.
json prediction_json(const Prediction& p, const Example& ex);

/// Rows qid,clip_index,raw_score,sigmoid_score for every positive pair.
std::string export_curves_csv(const MsDetr& model, const Dataset& data);

InputDims input_dims_of(const Dataset& data);

}  // namespace msdetr
