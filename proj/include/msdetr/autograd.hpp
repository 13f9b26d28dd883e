#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Graph is a tape: every op appends a node holding its value and a closure
// that pushes the node's gradient back to its inputs. Graphs are cheap and
// single-use; build one per sample, call backward() on a 1x1 root, then
// harvest parameter gradients with accumulate_param_grads().

#include <Eigen/Dense>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "msdetr/params.hpp"

namespace msdetr::ag {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : g_(g), id_(id) {}

  const Mat& value() const;
  /// Gradient after backward(); zero-shaped if the node never received one.
  Mat grad() const;
  Graph& graph() const { return *g_; }
  int id() const { return id_; }
  bool valid() const { return g_ != nullptr; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  Graph* g_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Mat& out_grad)>;

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  /// Leaf that collects a gradient (used by finite-difference audits).
  Var variable(Mat value);
  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(const ParamStore& store, ParamId id);

  /// Appends an op node. `fn` runs during backward only if some input
  /// requires a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Mat value, std::span<const Var> inputs, BackwardFn fn);

  void backward(Var root);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Adds `g` into the gradient buffer of node `id` if it tracks gradients.
  void accumulate(int id, const Mat& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }
  Mat grad(int id) const;

  /// Adds gradients of all parameter leaves into `grads` (indexed like the
  /// ParamStore the leaves were created from).
  void accumulate_param_grads(GradStore& grads) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;  // param index -> node id
};

// ---- elementwise / linear algebra -----------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (N x C) + row (1 x C) broadcast over rows.
Var add_row(Var a, Var row);
Var relu(Var a);
Var sigmoid(Var a);
/// log(1 + exp(a)), computed stably.
Var softplus(Var a);
Var abs(Var a);
Var min(Var a, Var b);
Var max(Var a, Var b);
Var transpose(Var a);

// ---- reductions ------------------------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// log(sum(exp(a))) over every entry, 1x1.
Var logsumexp(Var a);
/// Row-wise log-softmax.
Var log_softmax_rows(Var a);

// ---- shape ops ---------------------------------------------------------------

Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Selects rows by index; repeated indices accumulate gradient.
Var gather_rows(Var a, std::span<const int> rows);

// ---- network primitives --------------------------------------------------

/// Row-wise layer normalisation with affine gamma/beta (1 x C each).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention over already projected inputs.
/// q: Nq x d, k/v: Nk x d. `allowed` (Nq x Nk), when given, is true where a
/// query may attend a key; disallowed keys are skipped entirely, so their
/// values never enter the arithmetic of that query row. A query row with
/// no allowed key outputs zeros.
Var attention(Var q, Var k, Var v, int heads, const BoolMat* allowed = nullptr);

/// Inverted dropout with keep mask drawn from `rng`; identity when p == 0.
Var dropout(Var x, double p, Rng& rng);

// ---- operators ---------------------------------------------------------------

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace msdetr::ag
