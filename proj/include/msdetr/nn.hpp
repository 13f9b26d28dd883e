#pragma once

#include <string>

#include "msdetr/autograd.hpp"
#include "msdetr/params.hpp"

namespace msdetr::nn {

using ag::Graph;
using ag::Var;

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
  ParamId weight;
  ParamId bias;
  int in = 0;
  int out = 0;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in_dim, int out_dim, Rng& rng);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
};

struct LayerNorm {
  ParamId gamma;
  ParamId beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, int dim, int num_heads, Rng& rng);
  Var forward(Graph& g, const ParamStore& store, Var query, Var key, Var value,
              const ag::BoolMat* allowed = nullptr) const;
};

/// Two-layer ReLU feed-forward d -> hidden -> d.
struct FeedForward {
  Linear fc1, fc2;

  FeedForward() = default;
  FeedForward(ParamStore& store, const std::string& name, int dim, int hidden, Rng& rng);
  Var forward(Graph& g, const ParamStore& store, Var x, double dropout, Rng& rng) const;
};

/// Three-layer MLP d -> d -> d -> out with ReLU hidden activations and a
/// sigmoid on the output. Used for both span heads.
struct SpanMlp {
  Linear fc1, fc2, fc3;

  SpanMlp() = default;
  SpanMlp(ParamStore& store, const std::string& name, int dim, int out_dim, Rng& rng);
  Var forward(Graph& g, const ParamStore& store, Var x) const;
};

/// Fixed sinusoidal table (rows x dim) used to initialise learned clip
/// positions.
Mat sinusoid_table(int rows, int dim);

}  // namespace msdetr::nn
