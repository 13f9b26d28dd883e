#include "msdetr/autograd.hpp"

#include <cmath>
#include <limits>

#include "msdetr/errors.hpp"

namespace msdetr::ag {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Var / Graph -------------------------------------------------------------

const Mat& Var::value() const { return g_->value(id_); }
Mat Var::grad() const { return g_->grad(id_); }

Var Graph::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(const ParamStore& store, ParamId id) {
  auto it = param_nodes_.find(id.index);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = variable(store.value(id));
  param_nodes_.emplace(id.index, v.id());
  return v;
}

Var Graph::record(Mat value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::record(Mat value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), Mat(), needs, needs ? std::move(fn) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(int id, const Mat& g) { accumulate_expr(id, g); }

Mat Graph::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward: root must be 1x1");
  if (!nodes_[root.id()].requires_grad) return;
  accumulate(root.id(), Mat::Ones(1, 1));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

void Graph::accumulate_param_grads(GradStore& grads) const {
  for (const auto& [pidx, nid] : param_nodes_) {
    const Node& n = nodes_[nid];
    if (n.grad.size() == 0) continue;
    grads.at(pidx) += n.grad;
  }
}

// ---- elementwise / linear algebra -----------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = a.graph();
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  // Coefficient-based product: each output row depends on the matching
  // input row only, independent of how many rows are batched together.
  Mat out = a.value().lazyProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return g.record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    if (gr.requires_grad(ia)) gr.accumulate_expr(ia, og * gr.value(ib).transpose());
    if (gr.requires_grad(ib)) gr.accumulate_expr(ib, gr.value(ia).transpose() * og);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Mat out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    gr.accumulate(ia, og);
    gr.accumulate(ib, og);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Mat out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    gr.accumulate(ia, og);
    gr.accumulate_expr(ib, -og);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Mat out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    gr.accumulate_expr(ia, og.cwiseProduct(gr.value(ib)));
    gr.accumulate_expr(ib, og.cwiseProduct(gr.value(ia)));
  });
}

Var div(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "div");
  Mat out = a.value().cwiseQuotient(b.value());
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    const Mat& bv = gr.value(ib);
    gr.accumulate_expr(ia, og.cwiseQuotient(bv));
    if (gr.requires_grad(ib)) {
      const Mat& av = gr.value(ia);
      gr.accumulate_expr(ib, -og.cwiseProduct(av).cwiseQuotient(bv.cwiseProduct(bv)));
    }
  });
}

Var scale(Var a, double s) {
  Mat out = a.value() * s;
  const int ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia, s](Graph& gr, const Mat& og) { gr.accumulate_expr(ia, og * s); });
}

Var add_scalar(Var a, double s) {
  Mat out = a.value().array() + s;
  const int ia = a.id();
  return a.graph().record(std::move(out), {a},
                          [ia](Graph& gr, const Mat& og) { gr.accumulate(ia, og); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  Mat out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.graph().record(std::move(out), {a, row}, [ia, ir](Graph& gr, const Mat& og) {
    gr.accumulate(ia, og);
    gr.accumulate_expr(ir, og.colwise().sum());
  });
}

Var relu(Var a) {
  Mat out = a.value().cwiseMax(0.0);
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    const Mat& av = gr.value(ia);
    gr.accumulate_expr(ia, (av.array() > 0.0).select(og, 0.0));
  });
}

Var sigmoid(Var a) {
  Mat out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    const Mat y = gr.value(ia).unaryExpr([](double x) { return stable_sigmoid(x); });
    gr.accumulate_expr(ia, og.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var softplus(Var a) {
  Mat out = a.value().unaryExpr([](double x) { return stable_softplus(x); });
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    const Mat s = gr.value(ia).unaryExpr([](double x) { return stable_sigmoid(x); });
    gr.accumulate_expr(ia, og.cwiseProduct(s));
  });
}

Var abs(Var a) {
  Mat out = a.value().cwiseAbs();
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    const Mat& av = gr.value(ia);
    gr.accumulate_expr(ia, og.cwiseProduct(av.unaryExpr([](double x) {
      return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    })));
  });
}

Var min(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "min");
  Mat out = a.value().cwiseMin(b.value());
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    const auto pick_a = (gr.value(ia).array() <= gr.value(ib).array());
    gr.accumulate_expr(ia, pick_a.select(og, 0.0));
    gr.accumulate_expr(ib, pick_a.select(Mat::Zero(og.rows(), og.cols()), og));
  });
}

Var max(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "max");
  Mat out = a.value().cwiseMax(b.value());
  const int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& gr, const Mat& og) {
    const auto pick_a = (gr.value(ia).array() >= gr.value(ib).array());
    gr.accumulate_expr(ia, pick_a.select(og, 0.0));
    gr.accumulate_expr(ib, pick_a.select(Mat::Zero(og.rows(), og.cols()), og));
  });
}

Var transpose(Var a) {
  Mat out = a.value().transpose();
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    gr.accumulate_expr(ia, og.transpose());
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.graph().record(std::move(out), {a}, [ia, r, c](Graph& gr, const Mat& og) {
    gr.accumulate_expr(ia, Mat::Constant(r, c, og(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var logsumexp(Var a) {
  const Mat& av = a.value();
  if (av.size() == 0) throw ShapeError("logsumexp: empty input");
  const double m = av.maxCoeff();
  Mat out(1, 1);
  out(0, 0) = m + std::log((av.array() - m).exp().sum());
  const int ia = a.id();
  const double lse = out(0, 0);
  return a.graph().record(std::move(out), {a}, [ia, lse](Graph& gr, const Mat& og) {
    gr.accumulate_expr(ia, ((gr.value(ia).array() - lse).exp() * og(0, 0)).matrix());
  });
}

Var log_softmax_rows(Var a) {
  const Mat& av = a.value();
  Mat out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const double m = av.row(r).maxCoeff();
    const double lse = m + std::log((av.row(r).array() - m).exp().sum());
    out.row(r) = av.row(r).array() - lse;
  }
  const int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& gr, const Mat& og) {
    // y = log_softmax(x); dx = og - softmax(x) * rowsum(og)
    const Mat& x = gr.value(ia);
    Mat dx(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).maxCoeff();
      Eigen::RowVectorXd p = (x.row(r).array() - m).exp();
      p /= p.sum();
      dx.row(r) = og.row(r) - p * og.row(r).sum();
    }
    gr.accumulate(ia, dx);
  });
}

// ---- shape ops ---------------------------------------------------------------

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.graph().record(std::move(out), {a, b}, [ia, ib, ca, cb](Graph& gr, const Mat& og) {
    gr.accumulate_expr(ia, og.leftCols(ca));
    gr.accumulate_expr(ib, og.rightCols(cb));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = parts.front().graph();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;  // (id, row count)
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    r += p.rows();
  }
  return g.record(std::move(out), parts, [spans](Graph& gr, const Mat& og) {
    Eigen::Index row = 0;
    for (const auto& [id, n] : spans) {
      gr.accumulate_expr(id, og.middleRows(row, n));
      row += n;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Mat out = a.value().middleRows(start, count);
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.graph().record(std::move(out), {a}, [ia, start, count, r, c](Graph& gr, const Mat& og) {
    Mat full = Mat::Zero(r, c);
    full.middleRows(start, count) = og;
    gr.accumulate(ia, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Mat out = a.value().middleCols(start, count);
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.graph().record(std::move(out), {a}, [ia, start, count, r, c](Graph& gr, const Mat& og) {
    Mat full = Mat::Zero(r, c);
    full.middleCols(start, count) = og;
    gr.accumulate(ia, full);
  });
}

Var gather_rows(Var a, std::span<const int> rows) {
  const Mat& av = a.value();
  Mat out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  const int ia = a.id();
  const Eigen::Index r = av.rows(), c = av.cols();
  std::vector<int> idx(rows.begin(), rows.end());
  return a.graph().record(std::move(out), {a}, [ia, idx, r, c](Graph& gr, const Mat& og) {
    Mat full = Mat::Zero(r, c);
    for (std::size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += og.row(static_cast<Eigen::Index>(i));
    gr.accumulate(ia, full);
  });
}

// ---- network primitives --------------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = x.value();
  const Eigen::Index n = xv.rows(), c = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 || beta.cols() != c)
    throw ShapeError("layer_norm: affine shape mismatch");
  Mat xhat(n, c);
  Vec inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
            beta.value().row(0).array();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.graph().record(std::move(out), {x, gamma, beta},
                          [ix, ig, ib, xhat, inv_std](Graph& gr, const Mat& og) {
                            const Eigen::Index cc = xhat.cols();
                            gr.accumulate_expr(ig, og.cwiseProduct(xhat).colwise().sum());
                            gr.accumulate_expr(ib, og.colwise().sum());
                            if (!gr.requires_grad(ix)) return;
                            const Mat dxhat = og.array().rowwise() * gr.value(ig).row(0).array();
                            Mat dx(xhat.rows(), cc);
                            for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                              const double m1 = dxhat.row(r).mean();
                              const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                              dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                          inv_std(r);
                            }
                            gr.accumulate(ix, dx);
                          });
}

Var attention(Var q, Var k, Var v, int heads, const BoolMat* allowed) {
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  const Eigen::Index nq = qv.rows(), nk = kv.rows(), d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != nk)
    throw ShapeError("attention: q/k/v shape mismatch");
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: d not divisible by heads");
  if (allowed && (allowed->rows() != nq || allowed->cols() != nk))
    throw ShapeError("attention: mask shape mismatch");
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[h] is nq x nk, exactly zero at disallowed entries.
  std::vector<Mat> probs(static_cast<std::size_t>(heads), Mat::Zero(nq, nk));
  Mat out = Mat::Zero(nq, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dh;
    Mat& p = probs[static_cast<std::size_t>(h)];
    for (Eigen::Index i = 0; i < nq; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < nk; ++j) {
        if (allowed && !(*allowed)(i, j)) continue;
        double s = 0.0;
        for (Eigen::Index t = 0; t < dh; ++t) s += qv(i, off + t) * kv(j, off + t);
        s *= inv_sqrt;
        p(i, j) = s;
        mx = std::max(mx, s);
      }
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < nk; ++j) {
        if (allowed && !(*allowed)(i, j)) continue;
        p(i, j) = std::exp(p(i, j) - mx);
        z += p(i, j);
      }
      for (Eigen::Index j = 0; j < nk; ++j) {
        if (allowed && !(*allowed)(i, j)) continue;
        p(i, j) /= z;
        const double w = p(i, j);
        for (Eigen::Index t = 0; t < dh; ++t) out(i, off + t) += w * vv(j, off + t);
      }
    }
  }

  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().record(
      std::move(out), {q, k, v},
      [iq, ik, iv, probs = std::move(probs), heads, dh, inv_sqrt](Graph& gr, const Mat& og) {
        const Mat& qv2 = gr.value(iq);
        const Mat& kv2 = gr.value(ik);
        const Mat& vv2 = gr.value(iv);
        const Eigen::Index nq2 = qv2.rows(), nk2 = kv2.rows(), d2 = qv2.cols();
        Mat dq = Mat::Zero(nq2, d2), dk = Mat::Zero(nk2, d2), dv = Mat::Zero(nk2, d2);
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index off = h * dh;
          const Mat& p = probs[static_cast<std::size_t>(h)];
          const auto og_h = og.middleCols(off, dh);
          dv.middleCols(off, dh).noalias() += p.transpose() * og_h;
          Mat dp = og_h * vv2.middleCols(off, dh).transpose();  // nq x nk
          // Softmax Jacobian; p is zero where masked so ds vanishes there.
          const Vec row_dot = dp.cwiseProduct(p).rowwise().sum();
          Mat ds = p.cwiseProduct((dp.colwise() - row_dot));
          ds *= inv_sqrt;
          dq.middleCols(off, dh).noalias() += ds * kv2.middleCols(off, dh);
          dk.middleCols(off, dh).noalias() += ds.transpose() * qv2.middleCols(off, dh);
        }
        gr.accumulate(iq, dq);
        gr.accumulate(ik, dk);
        gr.accumulate(iv, dv);
      });
}

Var dropout(Var x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c) mask(r, c) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Var m = x.graph().constant(std::move(mask));
  return mul(x, m);
}

}  // namespace msdetr::ag
