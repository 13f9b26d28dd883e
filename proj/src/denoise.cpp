#include "msdetr/denoise.hpp"

#include <algorithm>

#include "msdetr/errors.hpp"

namespace msdetr {

void NoiseConfig::validate() const {
  if (!(delta2 > 0.0)) throw ConfigError("noise delta2 must be > 0");
  if (pos_replicas < 0 || neg_replicas < 0) throw ConfigError("noise replica counts must be >= 0");
}

MomentSpan perturb_span(const MomentSpan& m, double delta2, double lambda, int center_sign, int span_sign,
                        double clip_width) {
  const double mag = delta2 * lambda * m.span / 2.0;
  double c = m.center + center_sign * mag;
  double s = m.span + span_sign * mag;
  s = std::clamp(s, std::min(clip_width, 1.0), 1.0);
  c = std::clamp(c, s / 2.0, 1.0 - s / 2.0);
  return MomentSpan{c, s};
}

NoisedMoments perturb_moments(const std::vector<MomentSpan>& moments, NoisePolarity polarity,
                              const NoiseConfig& cfg, Rng& rng, double clip_width) {
  NoisedMoments out;
  const double lo = polarity == NoisePolarity::positive ? 0.0 : 1.0;
  std::uniform_real_distribution<double> lambda_dist(lo, lo + 1.0);
  std::bernoulli_distribution coin(0.5);
  for (const auto& m : moments) {
    const double lambda = lambda_dist(rng);
    const int sc = coin(rng) ? 1 : -1;
    const int ss = coin(rng) ? 1 : -1;
    out.spans.push_back(perturb_span(m, cfg.delta2, lambda, sc, ss, clip_width));
    out.lambdas.push_back(lambda);
    out.center_signs.push_back(sc);
    out.span_signs.push_back(ss);
  }
  return out;
}

DenoiseSet make_denoise_set(const std::vector<MomentSpan>& gts, const NoiseConfig& cfg, Rng& rng,
                            double clip_width) {
  DenoiseSet set;
  if (!cfg.enabled || gts.empty()) return set;
  const int groups = std::max(cfg.pos_replicas, cfg.neg_replicas);
  for (int j = 0; j < groups; ++j) {
    auto add = [&](NoisePolarity pol, QueryTag tag) {
      const NoisedMoments n = perturb_moments(gts, pol, cfg, rng, clip_width);
      for (std::size_t i = 0; i < gts.size(); ++i) {
        set.spans.push_back(n.spans[i]);
        set.tags.push_back(tag);
        set.provenance.push_back(static_cast<int>(i));
        set.groups.push_back(j);
        set.lambdas.push_back(n.lambdas[i]);
      }
    };
    if (j < cfg.pos_replicas) add(NoisePolarity::positive, QueryTag::dn_pos);
    if (j < cfg.neg_replicas) add(NoisePolarity::negative, QueryTag::dn_neg);
  }
  return set;
}

}  // namespace msdetr
