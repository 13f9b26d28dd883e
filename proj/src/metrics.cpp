#include "msdetr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "msdetr/errors.hpp"

namespace msdetr {

double iou_1d(const MomentSpan& a, const MomentSpan& b) {
  const double inter = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const double uni = a.span + b.span - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

double top1_best_iou(const QueryEval& q) {
  if (q.preds.items.empty()) return 0.0;
  double best = 0.0;
  for (const auto& gt : q.gts) best = std::max(best, iou_1d(q.preds.items.front().span, gt));
  return best;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Area under the interpolated precision envelope given per-rank tp flags.
double interpolated_ap(const std::vector<int>& tp, std::size_t num_relevant) {
  if (num_relevant == 0 || tp.empty()) return 0.0;
  std::vector<double> prec, rec;
  prec.push_back(0.0);
  rec.push_back(0.0);
  double hits = 0.0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    prec.push_back(hits / static_cast<double>(i + 1));
    rec.push_back(hits / static_cast<double>(num_relevant));
  }
  prec.push_back(0.0);
  rec.push_back(1.0);
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i)
    if (rec[i] != rec[i - 1]) ap += (rec[i] - rec[i - 1]) * prec[i];
  return ap;
}

}  // namespace

double recall_at_1(const std::vector<QueryEval>& queries, double threshold) {
  if (queries.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& q : queries) hits += top1_best_iou(q) >= threshold ? 1.0 : 0.0;
  return hits / static_cast<double>(queries.size());
}

double average_precision(const std::vector<ScoredSpan>& ranked, const std::vector<MomentSpan>& gts, double threshold) {
  std::vector<char> used(gts.size(), 0);
  std::vector<int> tp;
  for (const auto& p : ranked) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j]) continue;
      const double v = iou_1d(p.span, gts[j]);
      if (v >= threshold && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) used[best] = 1;
    tp.push_back(best >= 0 ? 1 : 0);
  }
  return interpolated_ap(tp, gts.size());
}

std::vector<double> map_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

MapResult map_over_thresholds(const std::vector<QueryEval>& queries) {
  MapResult r;
  std::vector<double> per_t;
  for (double t : map_thresholds()) {
    std::vector<double> aps;
    for (const auto& q : queries) aps.push_back(average_precision(q.preds.items, q.gts, t));
    r.per_threshold[t] = mean_of(aps);
    per_t.push_back(r.per_threshold[t]);
  }
  r.average = mean_of(per_t);
  return r;
}

double ranking_ap(const std::vector<double>& scores, const std::vector<int>& relevant) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> tp;
  std::size_t total = 0;
  for (std::size_t i : order) tp.push_back(relevant[i] ? 1 : 0);
  for (int r : relevant) total += r ? 1 : 0;
  return interpolated_ap(tp, total);
}

HdResult hd_metrics(const std::vector<QueryEval>& queries) {
  HdResult r;
  if (queries.empty()) return r;
  std::vector<double> aps, hits;
  for (const auto& q : queries) {
    std::vector<int> rel;
    for (int l : q.clip_labels) rel.push_back(l >= 3 ? 1 : 0);
    aps.push_back(ranking_ap(q.clip_scores, rel));
    if (q.clip_scores.empty()) {
      hits.push_back(0.0);
      continue;
    }
    const auto top = std::max_element(q.clip_scores.begin(), q.clip_scores.end()) - q.clip_scores.begin();
    hits.push_back(q.clip_labels[top] >= 3 ? 1.0 : 0.0);
  }
  r.hd_map = mean_of(aps);
  r.hit_at_1 = mean_of(hits);
  return r;
}

double mean_iou(const std::vector<QueryEval>& queries) {
  std::vector<double> v;
  for (const auto& q : queries) v.push_back(top1_best_iou(q));
  return mean_of(v);
}

MetricsReport compute_metrics(const std::vector<QueryEval>& queries) {
  if (queries.empty()) throw InputError("no queries to evaluate");
  MetricsReport r;
  r.queries = queries.size();
  r.r1_at_050 = recall_at_1(queries, 0.5);
  r.r1_at_070 = recall_at_1(queries, 0.7);
  const MapResult m = map_over_thresholds(queries);
  r.map_at = m.per_threshold;
  r.map_avg = m.average;
  const HdResult hd = hd_metrics(queries);
  r.hd_map = hd.hd_map;
  r.hit_at_1 = hd.hit_at_1;
  r.mean_iou = mean_iou(queries);
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["queries"] = queries;
  j["r1_at_050"] = r1_at_050;
  j["r1_at_070"] = r1_at_070;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [t, v] : map_at) {
    char key[16];
    std::snprintf(key, sizeof key, "%.2f", t);
    per[key] = v;
  }
  j["map_at"] = per;
  j["map_avg"] = map_avg;
  j["hd_map"] = hd_map;
  j["hit_at_1"] = hit_at_1;
  j["mean_iou"] = mean_iou;
  return j.dump(2);
}

std::string per_query_csv(const std::vector<QueryEval>& queries) {
  std::ostringstream os;
  os.precision(17);
  os << "qid,r1_050,r1_070,top1_iou,ap_avg,hd_ap,hit_at_1\n";
  for (const auto& q : queries) {
    const std::vector<QueryEval> one{q};
    const double iou = top1_best_iou(q);
    const HdResult hd = hd_metrics(one);
    os << q.preds.qid << ',' << (iou >= 0.5) << ',' << (iou >= 0.7) << ',' << iou << ','
       << map_over_thresholds(one).average << ',' << hd.hd_map << ',' << hd.hit_at_1 << '\n';
  }
  return os.str();
}

RankedPredictions rank_predictions(std::string qid, std::vector<ScoredSpan> items) {
  std::stable_sort(items.begin(), items.end(), [](const ScoredSpan& a, const ScoredSpan& b) { return a.score > b.score; });
  return {std::move(qid), std::move(items)};
}

}  // namespace msdetr
