#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msdetr/autograd.hpp"
#include "msdetr/denoise.hpp"
#include "msdetr/feature_store.hpp"
#include "msdetr/matching.hpp"

namespace msdetr {

using ag::Var;

struct TermWeights {
  double l1 = 0.0;
  double giou = 0.0;
  double ce = 0.0;
};

struct LossWeights {
  TermWeights mr{10.0, 1.0, 4.0};
  TermWeights hd{1.0, 1.0, 1.0};
  TermWeights dn{10.0, 1.0, 4.0};
  /// Weight on the positive class of the highlight binary cross-entropy.
  double hd_pos_weight = 4.0;
  double lambda1 = 1.0;  // denoising term
  double lambda2 = 1.0;  // encoder contrastive suite
  double margin = 0.2;
  double temperature = 0.5;
  int rank_count = 4;
  /// Rank partition uses label > n instead of label >= n.
  bool rank_strict = false;
  /// Add the matching loss of every decoder layer, not only the last.
  bool aux_layers = true;

  void validate() const;
};

// ---- interval geometry ------------------------------------------------------

double giou_1d(const MomentSpan& a, const MomentSpan& b);
/// Row-wise gIoU between predicted (center, span) rows and fixed target rows;
/// returns N x 1.
Var giou_1d(Var pred, const Mat& target);

// ---- matching ---------------------------------------------------------------

/// Cost per (query, gt): l1 * |m_hat - m|_1 + giou * (1 - gIoU) - ce * fg_prob.
Mat match_cost(const Mat& pred, const Vec& fg_prob, const std::vector<MomentSpan>& gts, const TermWeights& w);
MatchResult hungarian_match(const Mat& pred, const Vec& fg_prob, const std::vector<MomentSpan>& gts,
                            const TermWeights& w);

/// Foreground probability (softmax column 1) per logits row.
Vec foreground_prob(const Mat& logits);

Mat spans_to_mat(const std::vector<MomentSpan>& spans);

// ---- losses -----------------------------------------------------------------

/// Mean two-class cross-entropy of logits rows against 0/1 labels.
Var cross_entropy(Var logits, const std::vector<int>& labels);

/// Matched L1 and (1 - gIoU) summed over pairs and divided by G, plus
/// cross-entropy over all K queries with label 1 iff matched.
Var mr_loss(Var moments, Var logits, const std::vector<MomentSpan>& gts, const MatchResult& match,
            const TermWeights& w);

/// Clip centre (i + 0.5) / L; index of the first window containing it, or -1.
int containing_window(int clip, int num_clips, const std::vector<MomentSpan>& gts);

/// Weighted binary cross-entropy on the raw clip scores (positive weight
/// `pos_weight`, normalised by the total weight) plus L1 / gIoU span terms
/// pairing each selected clip's reference span with the window containing
/// that clip, averaged over contributing clips.
Var hd_collab_loss(Var scores, Var references, const std::vector<int>& selected, const std::vector<int>& clip_in_gt,
                   const std::vector<MomentSpan>& gts, const TermWeights& w, double pos_weight);

/// Positive denoise rows: L1 + (1 - gIoU) to their ground truth averaged over
/// positive rows; every denoise row: cross-entropy (positive -> foreground,
/// negative -> background).
Var denoise_loss(Var moments, Var logits, const std::vector<QueryTag>& tags, const std::vector<int>& provenance,
                 const std::vector<MomentSpan>& gts, const TermWeights& w);

/// mean over clips of -log(1 - sigmoid(S)).
Var enc_neg_loss(Var neg_scores);

struct MarginPairs {
  int high = -1, low = -1;  // two in-window clips, label(high) > label(low)
  int in = -1, out = -1;    // one clip inside and one outside the windows
};

/// Random pair selection; a pair stays -1 when no valid pair exists.
MarginPairs sample_margin_pairs(const std::vector<int>& labels, Rng& rng);

/// max(0, delta + S_low - S_high) + max(0, delta + S_out - S_in); absent
/// pairs contribute nothing.
Var margin_loss(Var scores, const MarginPairs& pairs, double delta);

/// For n = 1..N: positives are clips with label >= n (or > n when strict),
/// negatives the remaining clips plus every negative-pair clip; term
/// logsumexp(all / xi) - logsumexp(pos / xi). Mean over n with positives.
/// `neg_scores` may be invalid (no negative pair).
Var rank_contrastive_loss(Var scores, const std::vector<int>& labels, Var neg_scores, double xi, int N,
                          bool strict = false);

struct LossParts {
  Var hd;
  Var mr;
  Var dn;       // optional
  Var enc_neg;  // optional
  Var margin;   // optional
  Var enc_cont; // optional
};

/// hd + mr + lambda1 * dn + lambda2 * (enc_neg + margin + enc_cont); absent
/// parts count as zero.
Var total_loss(ag::Graph& g, const LossParts& parts, const LossWeights& w);

}  // namespace msdetr
