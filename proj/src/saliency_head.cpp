#include "msdetr/saliency_head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "msdetr/errors.hpp"

namespace msdetr {

TopK select_top_k(const Vec& scores, int K) {
  TopK out;
  const int L = static_cast<int>(scores.size());
  if (K < 1 || L < 1) return out;
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  out.indices.reserve(K);
  for (int i = 0; i < K; ++i) out.indices.push_back(order[i % L]);
  out.padded = L < K;
  return out;
}

namespace {

void check_encode_dim(int d) {
  if (d <= 0 || d % 4 != 0) throw ConfigError("positional encoding needs d divisible by 4, got " + std::to_string(d));
}

// Angular frequency of entry j within one d/2 block, and whether it is a sine.
struct EncodeSlot {
  double freq;
  bool sine;
};

std::vector<EncodeSlot> encode_slots(int d) {
  const int half = d / 2;
  const int quarter = d / 4;
  std::vector<EncodeSlot> slots(half);
  for (int i = 0; i < quarter; ++i) {
    slots[i] = {2.0 * std::numbers::pi / std::pow(10000.0, 2.0 * i / half), true};
    slots[quarter + i] = {2.0 * std::numbers::pi / std::pow(10000.0, (2.0 * i + 1.0) / half), false};
  }
  return slots;
}

}  // namespace

Mat positional_encode(const Mat& spans, int d) {
  check_encode_dim(d);
  if (spans.cols() != 2) throw ShapeError("positional_encode expects K x 2 spans");
  const auto slots = encode_slots(d);
  const int half = d / 2;
  Mat out(spans.rows(), d);
  for (Eigen::Index k = 0; k < spans.rows(); ++k) {
    for (int coord = 0; coord < 2; ++coord) {
      const double r = spans(k, coord);
      for (int j = 0; j < half; ++j) {
        const double a = slots[j].freq * r;
        out(k, coord * half + j) = slots[j].sine ? std::sin(a) : std::cos(a);
      }
    }
  }
  return out;
}

Var positional_encode(Var spans, int d) {
  Mat value = positional_encode(spans.value(), d);
  const int id = spans.id();
  return spans.graph().record(std::move(value), {spans}, [id, d](Graph& g, const Mat& og) {
    const Mat& r = g.value(id);
    const auto slots = encode_slots(d);
    const int half = d / 2;
    Mat gr = Mat::Zero(r.rows(), 2);
    for (Eigen::Index k = 0; k < r.rows(); ++k) {
      for (int coord = 0; coord < 2; ++coord) {
        double acc = 0.0;
        for (int j = 0; j < half; ++j) {
          const double a = slots[j].freq * r(k, coord);
          const double dv = slots[j].sine ? slots[j].freq * std::cos(a) : -slots[j].freq * std::sin(a);
          acc += og(k, coord * half + j) * dv;
        }
        gr(k, coord) = acc;
      }
    }
    g.accumulate(id, gr);
  });
}

SaliencyHead::SaliencyHead(ParamStore& store, const ModelDims& dims, Rng& rng) : d_(dims.d) {
  w_s = store.add("saliency.w_s", xavier_uniform(dims.d, 1, rng));
  w_v = store.add("saliency.w_v", xavier_uniform(dims.d, 1, rng));
  aux_span = nn::SpanMlp(store, "saliency.aux_span", dims.d, 2, rng);
}

Var SaliencyHead::scores(Graph& g, const ParamStore& store, Var x_s, Var memory) const {
  Var clip_term = ag::matmul(memory, g.param(store, w_v));  // L x 1
  Var token_term = ag::matmul(x_s, g.param(store, w_s));    // 1 x 1
  return ag::scale(ag::matmul(clip_term, token_term), 1.0 / std::sqrt(static_cast<double>(d_)));
}

Var SaliencyHead::reference_spans(Graph& g, const ParamStore& store, Var content) const {
  return aux_span.forward(g, store, content);
}

GuidedQueries SaliencyHead::guide(Graph& g, const ParamStore& store, Var memory, const Vec& scores, int K) const {
  GuidedQueries q;
  q.top_k = select_top_k(scores, K);
  q.content = ag::gather_rows(memory, q.top_k.indices);
  q.references = reference_spans(g, store, q.content);
  q.positions = positional_encode(q.references, d_);
  return q;
}

Vec salience_scores(const Vec& x_s, const Mat& memory, const Vec& w_s, const Vec& w_v) {
  const double token = w_s.dot(x_s);
  return (memory * w_v) * token / std::sqrt(static_cast<double>(x_s.size()));
}

}  // namespace msdetr
