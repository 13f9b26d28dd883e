#include "msdetr/nn.hpp"

#include <cmath>

#include "msdetr/errors.hpp"

namespace msdetr::nn {

Linear::Linear(ParamStore& store, const std::string& name, int in_dim, int out_dim, Rng& rng)
    : in(in_dim), out(out_dim) {
  weight = store.add(name + ".weight", xavier_uniform(in_dim, out_dim, rng));
  bias = store.add(name + ".bias", Mat::Zero(1, out_dim));
}

Var Linear::forward(Graph& g, const ParamStore& store, Var x) const {
  if (x.cols() != in) throw ShapeError("Linear: expected " + std::to_string(in) + " input columns");
  return ag::add_row(ag::matmul(x, g.param(store, weight)), g.param(store, bias));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
  gamma = store.add(name + ".gamma", Mat::Ones(1, dim));
  beta = store.add(name + ".beta", Mat::Zero(1, dim));
}

Var LayerNorm::forward(Graph& g, const ParamStore& store, Var x) const {
  return ag::layer_norm(x, g.param(store, gamma), g.param(store, beta));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, int dim,
                                       int num_heads, Rng& rng)
    : q(store, name + ".q", dim, dim, rng),
      k(store, name + ".k", dim, dim, rng),
      v(store, name + ".v", dim, dim, rng),
      o(store, name + ".o", dim, dim, rng),
      heads(num_heads) {
  if (dim % num_heads != 0) throw ConfigError("model dim must be divisible by heads");
}

Var MultiHeadAttention::forward(Graph& g, const ParamStore& store, Var query, Var key, Var value,
                                const ag::BoolMat* allowed) const {
  Var qp = q.forward(g, store, query);
  Var kp = k.forward(g, store, key);
  Var vp = v.forward(g, store, value);
  return o.forward(g, store, ag::attention(qp, kp, vp, heads, allowed));
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng)
    : fc1(store, name + ".fc1", dim, hidden, rng), fc2(store, name + ".fc2", hidden, dim, rng) {}

Var FeedForward::forward(Graph& g, const ParamStore& store, Var x, double dropout, Rng& rng) const {
  Var h = ag::relu(fc1.forward(g, store, x));
  h = ag::dropout(h, dropout, rng);
  return fc2.forward(g, store, h);
}

SpanMlp::SpanMlp(ParamStore& store, const std::string& name, int dim, int out_dim, Rng& rng)
    : fc1(store, name + ".fc1", dim, dim, rng),
      fc2(store, name + ".fc2", dim, dim, rng),
      fc3(store, name + ".fc3", dim, out_dim, rng) {}

Var SpanMlp::forward(Graph& g, const ParamStore& store, Var x) const {
  Var h = ag::relu(fc1.forward(g, store, x));
  h = ag::relu(fc2.forward(g, store, h));
  return ag::sigmoid(fc3.forward(g, store, h));
}

Mat sinusoid_table(int rows, int dim) {
  Mat t(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) {
      const int pair = c / 2;
      const double freq = std::pow(10000.0, 2.0 * pair / static_cast<double>(dim));
      const double angle = static_cast<double>(r) / freq;
      t(r, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

}  // namespace msdetr::nn
