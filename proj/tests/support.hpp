#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msdetr/autograd.hpp"
#include "msdetr/feature_store.hpp"
#include "msdetr/params.hpp"

namespace msdetr::testing {

using ag::Graph;
using ag::Var;

struct FdReport {
  double max_rel = 0.0;
  std::string worst;
  int checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / scale;
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n01;
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * n01(rng);
  return m;
}

inline std::vector<MomentSpan> random_spans(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MomentSpan> out;
  for (int i = 0; i < n; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    b = std::max(b, a + 0.02);
    if (b > 1.0) {
      a -= b - 1.0;
      b = 1.0;
    }
    out.push_back(MomentSpan::from_start_end(a, b));
  }
  return out;
}

inline Mat random_pred(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Mat m(n, 2);
  for (int i = 0; i < n; ++i) m.row(i) << u(rng), u(rng) * 0.6;
  return m;
}

using InputFn = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Central differences of a scalar function against reverse-mode gradients
/// for every entry of every input.
inline FdReport check_inputs(const InputFn& f, const std::vector<Mat>& inputs, double h = 1e-6) {
  std::vector<Mat> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(g.variable(m));
    Var out = f(g, vars);
    g.backward(out);
    for (const auto& v : vars) {
      Mat gr = v.grad();
      if (gr.size() == 0) gr = Mat::Zero(v.rows(), v.cols());
      analytic.push_back(gr);
    }
  }
  auto eval = [&](const std::vector<Mat>& xs) {
    Graph g;
    std::vector<Var> vars;
    for (const auto& m : xs) vars.push_back(g.constant(m));
    return f(g, vars).scalar();
  };
  FdReport rep;
  std::vector<Mat> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (Eigen::Index i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k](i);
      xs[k](i) = orig + h;
      const double up = eval(xs);
      xs[k](i) = orig - h;
      const double down = eval(xs);
      xs[k](i) = orig;
      const double num = (up - down) / (2 * h);
      const double e = rel_error(analytic[k](i), num);
      ++rep.checked;
      if (e > rep.max_rel) {
        rep.max_rel = e;
        rep.worst = "input " + std::to_string(k) + "[" + std::to_string(i) + "] analytic " +
                    std::to_string(analytic[k](i)) + " numeric " + std::to_string(num);
      }
    }
  }
  return rep;
}

/// Same check over parameters of `store`, sampling up to `per_param`
/// entries of each tensor.
inline FdReport check_params(ParamStore& store, const std::function<Var(Graph&)>& f, Rng& rng, int per_param = 4,
                             double h = 1e-6) {
  GradStore grads = store.zeros_like();
  {
    Graph g;
    Var out = f(g);
    g.backward(out);
    g.accumulate_param_grads(grads);
  }
  auto eval = [&] {
    Graph g;
    return f(g).scalar();
  };
  FdReport rep;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Mat& v = store.value(static_cast<int>(p));
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_param));
    for (int i : idx) {
      const double orig = v(i);
      v(i) = orig + h;
      const double up = eval();
      v(i) = orig - h;
      const double down = eval();
      v(i) = orig;
      const double num = (up - down) / (2 * h);
      const double e = rel_error(grads[p](i), num);
      ++rep.checked;
      if (e > rep.max_rel) {
        rep.max_rel = e;
        rep.worst = store.name(static_cast<int>(p)) + "[" + std::to_string(i) + "] analytic " +
                    std::to_string(grads[p](i)) + " numeric " + std::to_string(num);
      }
    }
  }
  return rep;
}

}  // namespace msdetr::testing
