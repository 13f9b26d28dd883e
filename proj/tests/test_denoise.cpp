#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "msdetr/denoise.hpp"
#include "msdetr/errors.hpp"
#include "msdetr/metrics.hpp"

using namespace msdetr;

TEST_CASE("noise magnitude") {
  // |dc| = |ds| = delta2 * lambda * s / 2 = 1 * 0.5 * 0.4 / 2
  const MomentSpan m{0.5, 0.4};
  const MomentSpan up = perturb_span(m, 1.0, 0.5, +1, +1, 0.01);
  CHECK(up.center - m.center == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(up.span - m.span == doctest::Approx(0.1).epsilon(1e-12));
  const MomentSpan down = perturb_span(m, 1.0, 0.5, -1, -1, 0.01);
  CHECK(m.center - down.center == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(m.span - down.span == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("vanishing delta2 leaves spans unchanged") {
  Rng rng(1);
  NoiseConfig cfg;
  cfg.delta2 = 1e-300;
  const std::vector<MomentSpan> gts{{0.3, 0.2}, {0.7, 0.4}};
  const NoisedMoments n = perturb_moments(gts, NoisePolarity::negative, cfg, rng, 0.01);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    CHECK(n.spans[i].center == gts[i].center);
    CHECK(n.spans[i].span == gts[i].span);
  }
  cfg.delta2 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("lambda ranges and recorded draws") {
  Rng rng(2);
  NoiseConfig cfg;
  cfg.delta2 = 0.8;
  // Spans small and central so no clamping interferes.
  const std::vector<MomentSpan> gts(200, MomentSpan{0.5, 0.1});
  for (auto pol : {NoisePolarity::positive, NoisePolarity::negative}) {
    const NoisedMoments n = perturb_moments(gts, pol, cfg, rng, 1e-3);
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const double dc = std::abs(n.spans[i].center - gts[i].center);
      const double half = cfg.delta2 * gts[i].span / 2;
      if (pol == NoisePolarity::positive) {
        CHECK(n.lambdas[i] >= 0.0);
        CHECK(n.lambdas[i] <= 1.0);
        CHECK(dc <= half + 1e-15);
      } else {
        CHECK(n.lambdas[i] >= 1.0);
        CHECK(n.lambdas[i] <= 2.0);
        CHECK(dc >= half - 1e-15);
        CHECK(dc <= 2 * half + 1e-15);
      }
      const MomentSpan again = perturb_span(gts[i], cfg.delta2, n.lambdas[i], n.center_signs[i], n.span_signs[i], 1e-3);
      CHECK(again.center == n.spans[i].center);
      CHECK(again.span == n.spans[i].span);
    }
  }
  CHECK(perturb_moments({}, NoisePolarity::positive, cfg, rng, 0.01).spans.empty());
}

TEST_CASE("positive noise always overlaps its ground truth and outputs stay valid") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double delta2 : {0.25, 1.0}) {
    NoiseConfig cfg;
    cfg.delta2 = delta2;
    for (int t = 0; t < 10000; ++t) {
      double a = u(rng), b = u(rng);
      if (a > b) std::swap(a, b);
      if (b - a < 1.0 / 32) b = std::min(1.0, a + 1.0 / 32);
      const MomentSpan gt = MomentSpan::from_start_end(a, b);
      const NoisedMoments pos = perturb_moments({gt}, NoisePolarity::positive, cfg, rng, 1.0 / 32);
      CHECK(iou_1d(pos.spans[0], gt) > 0.0);
      CHECK_NOTHROW(pos.spans[0].validate());
      const NoisedMoments neg = perturb_moments({gt}, NoisePolarity::negative, cfg, rng, 1.0 / 32);
      CHECK_NOTHROW(neg.spans[0].validate());
      CHECK(neg.spans[0].span >= 1.0 / 32 - 1e-15);
    }
  }
}

TEST_CASE("denoise sets are grouped by replica and deterministic") {
  NoiseConfig cfg;
  const std::vector<MomentSpan> gts{{0.3, 0.2}, {0.7, 0.2}};
  Rng r1(4), r2(4);
  const DenoiseSet a = make_denoise_set(gts, cfg, r1, 0.03);
  const DenoiseSet b = make_denoise_set(gts, cfg, r2, 0.03);
  REQUIRE(a.size() == 8);
  CHECK(a.groups == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
  CHECK(a.provenance == std::vector<int>{0, 1, 0, 1, 0, 1, 0, 1});
  CHECK(a.tags[0] == QueryTag::dn_pos);
  CHECK(a.tags[2] == QueryTag::dn_neg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.spans[i].center == b.spans[i].center);

  NoiseConfig one;
  one.pos_replicas = one.neg_replicas = 1;
  Rng r3(5);
  const DenoiseSet single = make_denoise_set({gts[0]}, one, r3, 0.03);
  CHECK(single.size() == 2);
  CHECK(single.provenance == std::vector<int>{0, 0});
  CHECK(make_denoise_set({}, cfg, r3, 0.03).size() == 0);
  cfg.enabled = false;
  CHECK(make_denoise_set(gts, cfg, r3, 0.03).size() == 0);
}
