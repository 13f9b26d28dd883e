#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>

#include "msdetr/autograd.hpp"
#include "msdetr/errors.hpp"
#include "msdetr/nn.hpp"
#include "support.hpp"

using namespace msdetr;
using namespace msdetr::testing;

namespace {

constexpr double kTol = 1e-4;

// Weighted sum with fixed random weights so every output entry matters.
Var readout(Graph& g, Var x, unsigned seed = 99) {
  Rng rng(seed);
  return ag::sum(ag::mul(x, g.constant(random_mat(x.rows(), x.cols(), rng))));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  const Mat a = random_mat(3, 4, rng);
  const Mat b = random_mat(3, 4, rng);
  const Mat pos = (random_mat(3, 4, rng).array().abs() + 0.5).matrix();
  struct Case {
    const char* name;
    InputFn f;
  };
  const std::vector<Case> cases{
      {"add", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::add(v[0], v[1])); }},
      {"sub", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::sub(v[0], v[1])); }},
      {"mul", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::mul(v[0], v[1])); }},
      {"div", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::div(v[0], v[2])); }},
      {"scale", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::scale(v[0], -2.5)); }},
      {"add_scalar", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::add_scalar(v[0], 0.3)); }},
      {"relu", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::relu(v[0])); }},
      {"sigmoid", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::sigmoid(v[0])); }},
      {"softplus", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::softplus(v[0])); }},
      {"abs", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::abs(v[0])); }},
      {"min", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::min(v[0], v[1])); }},
      {"max", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::max(v[0], v[1])); }},
      {"transpose", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::transpose(v[0])); }},
      {"mean", [](Graph&, const std::vector<Var>& v) { return ag::mean(ag::mul(v[0], v[1])); }},
      {"logsumexp", [](Graph&, const std::vector<Var>& v) { return ag::logsumexp(v[0]); }},
      {"log_softmax", [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::log_softmax_rows(v[0])); }},
  };
  for (const auto& c : cases) {
    const FdReport r = check_inputs(c.f, {a, b, pos});
    INFO(c.name << ": " << r.worst);
    CHECK(r.max_rel < kTol);
  }
}

TEST_CASE("shape ops and matmul match finite differences") {
  Rng rng(2);
  const Mat a = random_mat(4, 3, rng);
  const Mat b = random_mat(3, 5, rng);
  const Mat row = random_mat(1, 3, rng);
  const std::vector<int> idx{3, 0, 3, 1};
  const std::vector<InputFn> fns{
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::matmul(v[0], v[1])); },
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::add_row(v[0], v[2])); },
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::concat_cols(v[0], v[0])); },
      [](Graph& g, const std::vector<Var>& v) {
        std::array<Var, 2> parts{v[0], v[2]};
        return readout(g, ag::concat_rows(parts));
      },
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::slice_rows(v[0], 1, 2)); },
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::slice_cols(v[1], 2, 3)); },
      [&idx](Graph& g, const std::vector<Var>& v) { return readout(g, ag::gather_rows(v[0], idx)); },
  };
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const FdReport r = check_inputs(fns[i], {a, b, row});
    INFO("case " << i << ": " << r.worst);
    CHECK(r.max_rel < kTol);
  }
}

TEST_CASE("layer norm and attention match finite differences") {
  Rng rng(3);
  const Mat x = random_mat(3, 8, rng);
  const Mat gamma = random_mat(1, 8, rng);
  const Mat beta = random_mat(1, 8, rng);
  const FdReport ln = check_inputs(
      [](Graph& g, const std::vector<Var>& v) { return readout(g, ag::layer_norm(v[0], v[1], v[2])); },
      {x, gamma, beta});
  INFO(ln.worst);
  CHECK(ln.max_rel < kTol);

  const Mat q = random_mat(3, 8, rng), k = random_mat(5, 8, rng), val = random_mat(5, 8, rng);
  ag::BoolMat allowed = ag::BoolMat::Constant(3, 5, true);
  allowed(0, 1) = allowed(2, 4) = allowed(2, 0) = false;
  const FdReport at = check_inputs(
      [&](Graph& g, const std::vector<Var>& v) { return readout(g, ag::attention(v[0], v[1], v[2], 2, &allowed)); },
      {q, k, val});
  INFO(at.worst);
  CHECK(at.max_rel < kTol);
}

TEST_CASE("masked attention ignores disallowed keys exactly") {
  Rng rng(4);
  Graph g;
  const Mat q = random_mat(2, 4, rng), k = random_mat(3, 4, rng);
  Mat v = random_mat(3, 4, rng);
  ag::BoolMat allowed = ag::BoolMat::Constant(2, 3, true);
  allowed(0, 2) = false;
  const Mat before = ag::attention(g.constant(q), g.constant(k), g.constant(v), 2, &allowed).value();
  v.row(2).setConstant(1e6);
  Mat k2 = k;
  k2.row(2).setConstant(-3.0);
  const Mat after = ag::attention(g.constant(q), g.constant(k2), g.constant(v), 2, &allowed).value();
  CHECK((before.row(0) - after.row(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((before.row(1) - after.row(1)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("attention row with no allowed key outputs zeros") {
  Rng rng(5);
  Graph g;
  ag::BoolMat allowed = ag::BoolMat::Constant(2, 2, false);
  allowed(1, 0) = true;
  const Mat out = ag::attention(g.constant(random_mat(2, 4, rng)), g.constant(random_mat(2, 4, rng)),
                                g.constant(random_mat(2, 4, rng)), 1, &allowed)
                      .value();
  CHECK(out.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single key attention returns the value row") {
  Rng rng(6);
  Graph g;
  const Mat v = random_mat(1, 4, rng);
  const Mat out = ag::attention(g.constant(random_mat(3, 4, rng)), g.constant(random_mat(1, 4, rng)), g.constant(v), 2)
                      .value();
  for (int r = 0; r < 3; ++r) CHECK((out.row(r) - v).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("param leaves are shared and gradients accumulate into the store") {
  ParamStore store;
  Rng rng(7);
  const ParamId w = store.add("w", random_mat(2, 2, rng));
  Graph g;
  Var a = g.param(store, w);
  Var b = g.param(store, w);
  CHECK(a.id() == b.id());
  Var out = ag::sum(ag::add(a, b));
  g.backward(out);
  GradStore grads = store.zeros_like();
  g.accumulate_param_grads(grads);
  CHECK(grads[0].isApprox(Mat::Constant(2, 2, 2.0)));
  CHECK_THROWS_AS(store.add("w", Mat::Zero(1, 1)), ConfigError);
}

TEST_CASE("dropout is identity at p = 0 and rescales kept entries") {
  Rng rng(8);
  Graph g;
  const Mat x = Mat::Ones(50, 20);
  CHECK(ag::dropout(g.constant(x), 0.0, rng).value() == x);
  const Mat y = ag::dropout(g.constant(x), 0.5, rng).value();
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK((y(i) == 0.0 || y(i) == 2.0));
  const double kept = (y.array() > 0).cast<double>().mean();
  CHECK(kept == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("linear layer gradient matches finite differences") {
  ParamStore store;
  Rng rng(9);
  nn::Linear lin(store, "lin", 3, 4, rng);
  nn::SpanMlp mlp(store, "mlp", 4, 2, rng);
  // Random biases keep pre-activations away from the ReLU kink at exactly 0.
  for (std::size_t i = 0; i < store.size(); ++i) store.value(static_cast<int>(i)) = random_mat(store.value(static_cast<int>(i)).rows(), store.value(static_cast<int>(i)).cols(), rng);
  const Mat x = random_mat(5, 3, rng);
  auto f = [&](Graph& g) { return readout(g, mlp.forward(g, store, lin.forward(g, store, g.constant(x)))); };
  const FdReport r = check_params(store, f, rng, 100);
  INFO(r.worst);
  CHECK(r.max_rel < kTol);
}
