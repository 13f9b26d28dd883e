#pragma once

#include <vector>

#include "msdetr/feature_store.hpp"

namespace msdetr {

struct NoiseConfig {
  bool enabled = true;
  double delta2 = 1.0;
  int pos_replicas = 2;
  int neg_replicas = 2;

  void validate() const;
};

enum class NoisePolarity { positive, negative };

/// Perturbed spans plus the draws that produced them.
struct NoisedMoments {
  std::vector<MomentSpan> spans;
  std::vector<double> lambdas;
  std::vector<int> center_signs;  // +1 / -1
  std::vector<int> span_signs;
};

/// Applies |dc| = |ds| = delta2 * lambda * s / 2 with the given signs, then
/// clamps: span into [clip_width, 1], center so the span stays inside [0, 1].
MomentSpan perturb_span(const MomentSpan& m, double delta2, double lambda, int center_sign, int span_sign,
                        double clip_width);

/// lambda ~ U[0,1] for positive noise, U[1,2] for negative; signs independent.
NoisedMoments perturb_moments(const std::vector<MomentSpan>& moments, NoisePolarity polarity,
                              const NoiseConfig& cfg, Rng& rng, double clip_width);

enum class QueryTag { matched, dn_pos, dn_neg };

/// Denoise query spans laid out group by group. Group j holds the j-th
/// positive replica then the j-th negative replica of every ground truth.
struct DenoiseSet {
  std::vector<MomentSpan> spans;
  std::vector<QueryTag> tags;
  std::vector<int> provenance;  // ground-truth index per query
  std::vector<int> groups;      // replica group per query
  std::vector<double> lambdas;

  std::size_t size() const { return spans.size(); }
};

DenoiseSet make_denoise_set(const std::vector<MomentSpan>& gts, const NoiseConfig& cfg, Rng& rng,
                            double clip_width);

}  // namespace msdetr
