#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "msdetr/errors.hpp"
#include "msdetr/saliency_head.hpp"
#include "support.hpp"

using namespace msdetr;
using namespace msdetr::testing;

TEST_CASE("salience formula") {
  // w_s . x_s = 2, w_v . x_i = 3, d = 4 -> 2 * 3 / sqrt(4) = 3
  Vec x_s(4), w_s(4), w_v(4);
  x_s << 1, 1, 0, 0;
  w_s << 1, 1, 0, 0;
  w_v << 3, 0, 0, 0;
  Mat memory(2, 4);
  memory << 1, 0, 0, 0, 2, 5, 5, 5;
  const Vec s = salience_scores(x_s, memory, w_s, w_v);
  CHECK(s(0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(s(1) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(salience_scores(x_s, memory, Vec::Zero(4), w_v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("head scores equal the plain formula and are bilinear") {
  ParamStore store;
  Rng rng(3);
  ModelDims dims;
  dims.d = 16;
  SaliencyHead head(store, dims, rng);
  const Mat xs = random_mat(1, 16, rng), mem = random_mat(6, 16, rng);
  Graph g;
  const Mat s = head.scores(g, store, g.constant(xs), g.constant(mem)).value();
  const Vec ref = salience_scores(xs.row(0).transpose(), mem, store.value(head.w_s).col(0), store.value(head.w_v).col(0));
  CHECK((s.col(0) - ref).cwiseAbs().maxCoeff() < 1e-12);

  const Mat s2 = head.scores(g, store, g.constant(2.5 * xs), g.constant(mem)).value();
  CHECK((s2 - 2.5 * s).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::Index a1, a2, dummy;
  s.col(0).maxCoeff(&a1, &dummy);
  s2.col(0).maxCoeff(&a2, &dummy);
  CHECK(a1 == a2);

  const Mat xs_b = random_mat(1, 16, rng), mem_b = random_mat(6, 16, rng);
  const Mat sum_xs = head.scores(g, store, g.constant(xs + xs_b), g.constant(mem)).value();
  const Mat parts_xs = s + head.scores(g, store, g.constant(xs_b), g.constant(mem)).value();
  CHECK((sum_xs - parts_xs).cwiseAbs().maxCoeff() < 1e-12);
  const Mat sum_mem = head.scores(g, store, g.constant(xs), g.constant(mem + mem_b)).value();
  const Mat parts_mem = s + head.scores(g, store, g.constant(xs), g.constant(mem_b)).value();
  CHECK((sum_mem - parts_mem).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("top-K selection") {
  Vec s(4);
  s << 0.1, 0.9, 0.5, 0.7;
  CHECK(select_top_k(s, 2).indices == std::vector<int>{1, 3});
  CHECK(select_top_k(Vec::Constant(5, 0.3), 2).indices == std::vector<int>{0, 1});
  Vec three(3);
  three << 0.2, 0.8, 0.5;
  const TopK padded = select_top_k(three, 5);
  CHECK(padded.padded);
  CHECK(padded.indices == std::vector<int>{1, 2, 0, 1, 2});
  CHECK_FALSE(select_top_k(s, 4).padded);
}

TEST_CASE("top-K is invariant under increasing transforms") {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const Vec s = random_mat(9, 1, rng).col(0);
    const Vec transformed = (s.array() * 3.0).exp() + 0.5;
    CHECK(select_top_k(s, 4).indices == select_top_k(transformed, 4).indices);
  }
}

TEST_CASE("positional encoding layout") {
  const int d = 16;
  Mat r(1, 2);
  r << 0.0, 0.25;
  const Mat e = positional_encode(r, d);
  REQUIRE(e.cols() == d);
  for (int j = 0; j < 4; ++j) CHECK(e(0, j) == 0.0);
  for (int j = 4; j < 8; ++j) CHECK(e(0, j) == 1.0);
  CHECK(e(0, 8) == doctest::Approx(1.0).epsilon(1e-15));  // sin(2 pi 0.25)
  // Second cosine entry of the span block: cos(2 pi r / 10000^(3/8)).
  CHECK(e(0, 13) == doctest::Approx(std::cos(2 * std::numbers::pi * 0.25 / std::pow(10000.0, 3.0 / 8.0))));
  CHECK_THROWS_AS(positional_encode(r, 18), ConfigError);

  Rng rng(5);
  const Mat many = (random_mat(50, 2, rng) * 10.0);
  CHECK(positional_encode(many, 32).cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("positional encoding is injective on a 1e-3 grid") {
  const int d = 16;
  const int n = 1000;
  // Adjacent grid values of each coordinate must encode to distinct rows;
  // the nearest other row stays strictly away from zero distance.
  Mat grid(n, 2);
  for (int i = 0; i < n; ++i) grid.row(i) << i * 1e-3, 1.0 - i * 1e-3;
  const Mat e = positional_encode(grid, d);
  double min_dist = 1e9;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) min_dist = std::min(min_dist, (e.row(i) - e.row(j)).norm());
  CHECK(min_dist > 1e-4);

  Mat centers(n, 2), spans(n, 2);
  for (int i = 0; i < n; ++i) {
    centers.row(i) << i * 1e-3, 0.5;
    spans.row(i) << 0.5, i * 1e-3;
  }
  const Mat ec = positional_encode(centers, d), es = positional_encode(spans, d);
  for (int i = 0; i + 1 < n; ++i) {
    CHECK((ec.row(i) - ec.row(i + 1)).norm() > 0.0);
    CHECK((es.row(i) - es.row(i + 1)).norm() > 0.0);
  }
}

TEST_CASE("positional encoding gradient") {
  Rng rng(6);
  const FdReport r = check_inputs(
      [](Graph& g, const std::vector<Var>& v) {
        Rng w(1);
        return ag::sum(ag::mul(positional_encode(v[0], 16), g.constant(random_mat(3, 16, w))));
      },
      {random_mat(3, 2, rng)});
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("reference spans") {
  ParamStore store;
  Rng rng(7);
  ModelDims dims;
  dims.d = 16;
  SaliencyHead head(store, dims, rng);
  Graph g;
  const Mat q = random_mat(5, 16, rng, 50.0);
  const Mat r = head.reference_spans(g, store, g.constant(q)).value();
  CHECK(r.cols() == 2);
  CHECK(r.minCoeff() > 0.0);
  CHECK(r.maxCoeff() < 1.0);

  ParamStore zero;
  SaliencyHead zh(zero, dims, rng);
  for (std::size_t i = 0; i < zero.size(); ++i) zero.value(static_cast<int>(i)).setZero();
  Graph gz;
  const Mat rz = zh.reference_spans(gz, zero, gz.constant(q)).value();
  CHECK((rz.array() == 0.5).all());

  for (std::size_t i = 0; i < store.size(); ++i) {
    Mat& v = store.value(static_cast<int>(i));
    v += random_mat(v.rows(), v.cols(), rng, 0.3);
  }
  const Mat q_small = random_mat(4, 16, rng);
  const FdReport fd = check_params(store, [&](Graph& gg) {
    Rng w(2);
    return ag::sum(ag::mul(head.reference_spans(gg, store, gg.constant(q_small)), gg.constant(random_mat(4, 2, w))));
  }, rng, 50);
  INFO(fd.worst);
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("guide gathers the top-K memory rows") {
  ParamStore store;
  Rng rng(8);
  ModelDims dims;
  dims.d = 16;
  SaliencyHead head(store, dims, rng);
  Graph g;
  const Mat mem = random_mat(6, 16, rng);
  Vec s(6);
  s << 0.1, 0.4, 0.9, -1, 0.3, 0.8;
  const GuidedQueries q = head.guide(g, store, g.constant(mem), s, 3);
  CHECK(q.top_k.indices == std::vector<int>{2, 5, 1});
  CHECK(q.content.value().row(0) == mem.row(2));
  CHECK(q.positions.value() == positional_encode(q.references.value(), 16));
}
