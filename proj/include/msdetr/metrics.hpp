#pragma once

#include <map>
#include <string>
#include <vector>

#include "msdetr/feature_store.hpp"

namespace msdetr {

struct ScoredSpan {
  MomentSpan span;
  double score = 0.0;
};

/// Predictions of one query sorted by descending score.
struct RankedPredictions {
  std::string qid;
  std::vector<ScoredSpan> items;
};

/// Everything needed to score one query.
struct QueryEval {
  RankedPredictions preds;
  std::vector<MomentSpan> gts;
  std::vector<double> clip_scores;
  std::vector<int> clip_labels;  // -1..4
};

double iou_1d(const MomentSpan& a, const MomentSpan& b);

/// Fraction of queries whose top-1 prediction reaches IoU >= t with any gt.
double recall_at_1(const std::vector<QueryEval>& queries, double threshold);

/// Detection-style AP of one query at one threshold: predictions taken in
/// score order, each matched to the highest-IoU unmatched gt at IoU >= t,
/// area under the interpolated precision/recall curve.
double average_precision(const std::vector<ScoredSpan>& ranked, const std::vector<MomentSpan>& gts, double threshold);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> map_thresholds();

struct MapResult {
  std::map<double, double> per_threshold;
  double average = 0.0;
};

MapResult map_over_thresholds(const std::vector<QueryEval>& queries);

/// AP of ranking items by score against binary relevance; ties keep input order.
double ranking_ap(const std::vector<double>& scores, const std::vector<int>& relevant);

struct HdResult {
  double hd_map = 0.0;
  double hit_at_1 = 0.0;
};

/// Relevance = label >= 3. Clips labelled -1 are ranked as non-relevant.
HdResult hd_metrics(const std::vector<QueryEval>& queries);

double mean_iou(const std::vector<QueryEval>& queries);

struct MetricsReport {
  double r1_at_050 = 0.0;
  double r1_at_070 = 0.0;
  std::map<double, double> map_at;
  double map_avg = 0.0;
  double hd_map = 0.0;
  double hit_at_1 = 0.0;
  double mean_iou = 0.0;
  std::size_t queries = 0;

  std::string to_json() const;
  bool operator==(const MetricsReport&) const = default;
};

/// Throws InputError on an empty query list.
MetricsReport compute_metrics(const std::vector<QueryEval>& queries);

/// qid, r1 hit at 0.5/0.7, top-1 IoU, AP averaged over thresholds, HD AP, hit@1.
std::string per_query_csv(const std::vector<QueryEval>& queries);

/// Sorts by descending score, stable.
RankedPredictions rank_predictions(std::string qid, std::vector<ScoredSpan> items);

}  // namespace msdetr
