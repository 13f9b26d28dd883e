#include "msdetr/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "msdetr/errors.hpp"

namespace msdetr {

void LossWeights::validate() const {
  for (const TermWeights* t : {&mr, &hd, &dn})
    if (t->l1 < 0 || t->giou < 0 || t->ce < 0) throw ConfigError("loss weights must be >= 0");
  if (hd_pos_weight <= 0) throw ConfigError("hd_pos_weight must be > 0");
  if (lambda1 < 0 || lambda2 < 0 || margin < 0) throw ConfigError("lambda1, lambda2 and margin must be >= 0");
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
  if (rank_count < 1) throw ConfigError("rank_count must be >= 1");
}

double giou_1d(const MomentSpan& a, const MomentSpan& b) {
  const double inter = std::max(0.0, std::min(a.end(), b.end()) - std::max(a.start(), b.start()));
  const double uni = a.span + b.span - inter;
  const double hull = std::max(a.end(), b.end()) - std::min(a.start(), b.start());
  return inter / uni - (hull - uni) / hull;
}

Var giou_1d(Var pred, const Mat& target) {
  auto& g = pred.graph();
  if (pred.cols() != 2 || target.cols() != 2 || pred.rows() != target.rows())
    throw ShapeError("giou_1d: expected matching N x 2 inputs");
  Var c = ag::slice_cols(pred, 0, 1);
  Var s = ag::slice_cols(pred, 1, 1);
  Var ps = ag::sub(c, ag::scale(s, 0.5));
  Var pe = ag::add(c, ag::scale(s, 0.5));
  const Mat tc = target.col(0), tsp = target.col(1);
  Var ts = g.constant(tc - 0.5 * tsp);
  Var te = g.constant(tc + 0.5 * tsp);
  Var inter = ag::relu(ag::sub(ag::min(pe, te), ag::max(ps, ts)));
  Var uni = ag::sub(ag::add(s, g.constant(tsp)), inter);
  Var hull = ag::sub(ag::max(pe, te), ag::min(ps, ts));
  return ag::sub(ag::div(inter, uni), ag::div(ag::sub(hull, uni), hull));
}

Mat spans_to_mat(const std::vector<MomentSpan>& spans) {
  Mat m(static_cast<Eigen::Index>(spans.size()), 2);
  for (std::size_t i = 0; i < spans.size(); ++i) m.row(i) << spans[i].center, spans[i].span;
  return m;
}

Vec foreground_prob(const Mat& logits) {
  Vec p(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) p(i) = 1.0 / (1.0 + std::exp(logits(i, 0) - logits(i, 1)));
  return p;
}

Mat match_cost(const Mat& pred, const Vec& fg_prob, const std::vector<MomentSpan>& gts, const TermWeights& w) {
  Mat cost(pred.rows(), static_cast<Eigen::Index>(gts.size()));
  for (Eigen::Index q = 0; q < pred.rows(); ++q) {
    const MomentSpan p{pred(q, 0), pred(q, 1)};
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const double l1 = std::abs(p.center - gts[j].center) + std::abs(p.span - gts[j].span);
      cost(q, j) = w.l1 * l1 + w.giou * (1.0 - giou_1d(p, gts[j])) - w.ce * fg_prob(q);
    }
  }
  return cost;
}

MatchResult hungarian_match(const Mat& pred, const Vec& fg_prob, const std::vector<MomentSpan>& gts,
                            const TermWeights& w) {
  return solve_assignment(match_cost(pred, fg_prob, gts, w));
}

namespace {

Var zero(ag::Graph& g) { return g.constant(Mat::Zero(1, 1)); }

// Sum of |pred - target| over every entry.
Var l1_sum(Var pred, const Mat& target) {
  return ag::sum(ag::abs(ag::sub(pred, pred.graph().constant(target))));
}

// Sum over rows of (1 - gIoU).
Var giou_loss_sum(Var pred, const Mat& target) {
  const double n = static_cast<double>(pred.rows());
  return ag::add_scalar(ag::scale(ag::sum(giou_1d(pred, target)), -1.0), n);
}

}  // namespace

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  auto& g = logits.graph();
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || logits.cols() != 2)
    throw ShapeError("cross_entropy: expected N x 2 logits with N labels");
  if (labels.empty()) return zero(g);
  Mat onehot = Mat::Zero(logits.rows(), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) onehot(i, labels[i] ? 1 : 0) = 1.0;
  Var picked = ag::sum(ag::mul(ag::log_softmax_rows(logits), g.constant(onehot)));
  return ag::scale(picked, -1.0 / static_cast<double>(labels.size()));
}

Var mr_loss(Var moments, Var logits, const std::vector<MomentSpan>& gts, const MatchResult& match,
            const TermWeights& w) {
  std::vector<int> labels(static_cast<std::size_t>(moments.rows()), 0);
  std::vector<int> rows;
  std::vector<MomentSpan> targets;
  for (auto [q, j] : match.assignment) {
    rows.push_back(q);
    targets.push_back(gts.at(j));
    labels[q] = 1;
  }
  Var total = ag::scale(cross_entropy(logits, labels), w.ce);
  if (rows.empty()) return total;
  Var pred = ag::gather_rows(moments, rows);
  const Mat target = spans_to_mat(targets);
  const double inv_g = 1.0 / static_cast<double>(gts.size());
  total = ag::add(total, ag::scale(l1_sum(pred, target), w.l1 * inv_g));
  return ag::add(total, ag::scale(giou_loss_sum(pred, target), w.giou * inv_g));
}

int containing_window(int clip, int num_clips, const std::vector<MomentSpan>& gts) {
  const double c = (clip + 0.5) / static_cast<double>(num_clips);
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (c >= gts[j].start() && c <= gts[j].end()) return static_cast<int>(j);
  return -1;
}

Var hd_collab_loss(Var scores, Var references, const std::vector<int>& selected, const std::vector<int>& clip_in_gt,
                   const std::vector<MomentSpan>& gts, const TermWeights& w, double pos_weight) {
  auto& g = scores.graph();
  const Eigen::Index L = scores.rows();
  if (static_cast<Eigen::Index>(clip_in_gt.size()) != L || scores.cols() != 1)
    throw ShapeError("hd_collab_loss: one label per clip score required");
  Mat weight(L, 1), weighted_label(L, 1);
  for (Eigen::Index i = 0; i < L; ++i) {
    const bool pos = clip_in_gt[i] != 0;
    weight(i, 0) = pos ? pos_weight : 1.0;
    weighted_label(i, 0) = pos ? pos_weight : 0.0;
  }
  const double wsum = weight.sum();
  // -[y log sigmoid(S) + (1 - y) log(1 - sigmoid(S))] = softplus(S) - y S
  Var bce = ag::sub(ag::sum(ag::mul(ag::softplus(scores), g.constant(weight))),
                    ag::sum(ag::mul(scores, g.constant(weighted_label))));
  Var total = ag::scale(bce, w.ce / wsum);

  std::vector<int> rows;
  std::vector<MomentSpan> targets;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const int j = containing_window(selected[k], static_cast<int>(L), gts);
    if (j < 0) continue;
    rows.push_back(static_cast<int>(k));
    targets.push_back(gts[j]);
  }
  if (rows.empty()) return total;
  Var pred = ag::gather_rows(references, rows);
  const Mat target = spans_to_mat(targets);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  total = ag::add(total, ag::scale(l1_sum(pred, target), w.l1 * inv_n));
  return ag::add(total, ag::scale(giou_loss_sum(pred, target), w.giou * inv_n));
}

Var denoise_loss(Var moments, Var logits, const std::vector<QueryTag>& tags, const std::vector<int>& provenance,
                 const std::vector<MomentSpan>& gts, const TermWeights& w) {
  auto& g = moments.graph();
  if (tags.empty()) return zero(g);
  std::vector<int> labels, pos_rows;
  std::vector<MomentSpan> targets;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const bool pos = tags[i] == QueryTag::dn_pos;
    labels.push_back(pos ? 1 : 0);
    if (pos) {
      pos_rows.push_back(static_cast<int>(i));
      targets.push_back(gts.at(provenance[i]));
    }
  }
  Var total = ag::scale(cross_entropy(logits, labels), w.ce);
  if (pos_rows.empty()) return total;
  Var pred = ag::gather_rows(moments, pos_rows);
  const Mat target = spans_to_mat(targets);
  const double inv_n = 1.0 / static_cast<double>(pos_rows.size());
  total = ag::add(total, ag::scale(l1_sum(pred, target), w.l1 * inv_n));
  return ag::add(total, ag::scale(giou_loss_sum(pred, target), w.giou * inv_n));
}

Var enc_neg_loss(Var neg_scores) {
  if (neg_scores.rows() == 0) return zero(neg_scores.graph());
  return ag::mean(ag::softplus(neg_scores));
}

MarginPairs sample_margin_pairs(const std::vector<int>& labels, Rng& rng) {
  MarginPairs p;
  std::vector<int> inside, outside;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] >= 0 ? inside : outside).push_back(static_cast<int>(i));
  auto pick = [&](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  if (!inside.empty()) {
    std::vector<std::pair<int, int>> ordered;
    for (int a : inside)
      for (int b : inside)
        if (labels[a] > labels[b]) ordered.emplace_back(a, b);
    if (!ordered.empty()) {
      const auto& pr = ordered[std::uniform_int_distribution<std::size_t>(0, ordered.size() - 1)(rng)];
      p.high = pr.first;
      p.low = pr.second;
    }
    if (!outside.empty()) {
      p.in = pick(inside);
      p.out = pick(outside);
    }
  }
  return p;
}

Var margin_loss(Var scores, const MarginPairs& pairs, double delta) {
  auto& g = scores.graph();
  Var total = zero(g);
  auto hinge = [&](int better, int worse) {
    Var diff = ag::sub(ag::slice_rows(scores, worse, 1), ag::slice_rows(scores, better, 1));
    total = ag::add(total, ag::relu(ag::add_scalar(diff, delta)));
  };
  if (pairs.high >= 0 && pairs.low >= 0) hinge(pairs.high, pairs.low);
  if (pairs.in >= 0 && pairs.out >= 0) hinge(pairs.in, pairs.out);
  return total;
}

Var rank_contrastive_loss(Var scores, const std::vector<int>& labels, Var neg_scores, double xi, int N, bool strict) {
  auto& g = scores.graph();
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows()) throw ShapeError("rank loss: label count mismatch");
  Var all = scores;
  if (neg_scores.valid() && neg_scores.rows() > 0) {
    std::array<Var, 2> parts{scores, neg_scores};
    all = ag::concat_rows(parts);
  }
  Var lse_all = ag::logsumexp(ag::scale(all, 1.0 / xi));
  Var total = zero(g);
  int terms = 0;
  for (int n = 1; n <= N; ++n) {
    std::vector<int> pos;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (strict ? labels[i] > n : labels[i] >= n) pos.push_back(static_cast<int>(i));
    if (pos.empty()) continue;
    Var lse_pos = ag::logsumexp(ag::scale(ag::gather_rows(scores, pos), 1.0 / xi));
    total = ag::add(total, ag::sub(lse_all, lse_pos));
    ++terms;
  }
  if (terms == 0) return total;
  return ag::scale(total, 1.0 / terms);
}

Var total_loss(ag::Graph& g, const LossParts& parts, const LossWeights& w) {
  auto or_zero = [&](Var v) { return v.valid() ? v : zero(g); };
  Var total = ag::add(or_zero(parts.hd), or_zero(parts.mr));
  total = ag::add(total, ag::scale(or_zero(parts.dn), w.lambda1));
  Var contrastive = ag::add(ag::add(or_zero(parts.enc_neg), or_zero(parts.margin)), or_zero(parts.enc_cont));
  return ag::add(total, ag::scale(contrastive, w.lambda2));
}

}  // namespace msdetr
