#pragma once

#include <vector>

#include "msdetr/autograd.hpp"
#include "msdetr/model_dims.hpp"
#include "msdetr/nn.hpp"

namespace msdetr {

using ag::Graph;
using ag::Var;

struct TopK {
  std::vector<int> indices;  // 0-based clip indices, best first
  /// True when L < K and the sorted order was cycled to fill K slots.
  bool padded = false;
};

/// Indices of the K largest scores, ties broken by lower index. When fewer
/// than K scores exist the sorted order repeats until K indices are produced.
TopK select_top_k(const Vec& scores, int K);

/// Sinusoidal encoding of (center, span) rows into d columns: a d/2 block
/// per coordinate (center first), each holding d/4 sine entries
/// sin(2 pi r / 10000^(2i/(d/2))) followed by d/4 cosine entries
/// cos(2 pi r / 10000^((2i+1)/(d/2))). Throws ConfigError unless d % 4 == 0.
Mat positional_encode(const Mat& spans, int d);
/// Differentiable variant; gradients flow back into the span coordinates.
Var positional_encode(Var spans, int d);

struct GuidedQueries {
  Var content;     // K x d, memory rows at the top-K clips
  Var references;  // K x 2, (center, span)
  Var positions;   // K x d, positional_encode(references)
  TopK top_k;
};

/// Salience scoring, top-K content queries, auxiliary reference spans and
/// position queries.
class SaliencyHead {
 public:
  SaliencyHead() = default;
  SaliencyHead(ParamStore& store, const ModelDims& dims, Rng& rng);

  /// S_i = (w_s . x_s)(w_v . x_i) / sqrt(d) for every clip; returns L x 1 raw scores.
  Var scores(Graph& g, const ParamStore& store, Var x_s, Var memory) const;
  /// R = sigmoid MLP over the content queries, K x 2.
  Var reference_spans(Graph& g, const ParamStore& store, Var content) const;
  GuidedQueries guide(Graph& g, const ParamStore& store, Var memory, const Vec& scores, int K) const;

  ParamId w_s;  // d x 1
  ParamId w_v;  // d x 1
  nn::SpanMlp aux_span;

 private:
  int d_ = 0;
};

/// Plain-matrix form of the salience formula, used by tests and export.
Vec salience_scores(const Vec& x_s, const Mat& memory, const Vec& w_s, const Vec& w_v);

}  // namespace msdetr
