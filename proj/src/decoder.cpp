#include "msdetr/decoder.hpp"

#include <array>

#include "msdetr/errors.hpp"
#include "msdetr/saliency_head.hpp"

namespace msdetr {

Var combine_queries(Var content, Var position) {
  if (content.rows() != position.rows() || content.cols() != position.cols())
    throw ShapeError("combine_queries: content and position shapes differ");
  return ag::add(content, position);
}

ag::BoolMat group_mask(int num_matched, const std::vector<int>& groups) {
  const int n = num_matched + static_cast<int>(groups.size());
  ag::BoolMat m = ag::BoolMat::Constant(n, n, false);
  m.topLeftCorner(num_matched, num_matched).setConstant(true);
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = 0; j < groups.size(); ++j)
      m(num_matched + i, num_matched + j) = groups[i] == groups[j];
  return m;
}

QueryBatch build_query_batch(Var content, Var position, const DenoiseSet& dn, int d) {
  if (content.rows() != position.rows()) throw ShapeError("query content/position row mismatch");
  QueryBatch q;
  q.num_matched = static_cast<int>(content.rows());
  q.tags.assign(q.num_matched, QueryTag::matched);
  q.provenance.assign(q.num_matched, -1);
  q.groups.assign(q.num_matched, -1);
  if (dn.size() == 0) {
    q.content = content;
    q.position = position;
  } else {
    Graph& g = content.graph();
    Mat spans(dn.size(), 2);
    for (std::size_t i = 0; i < dn.size(); ++i) spans.row(i) << dn.spans[i].center, dn.spans[i].span;
    std::array<Var, 2> c{content, g.constant(Mat::Zero(spans.rows(), d))};
    std::array<Var, 2> p{position, g.constant(positional_encode(spans, d))};
    q.content = ag::concat_rows(c);
    q.position = ag::concat_rows(p);
    q.tags.insert(q.tags.end(), dn.tags.begin(), dn.tags.end());
    q.provenance.insert(q.provenance.end(), dn.provenance.begin(), dn.provenance.end());
    q.groups.insert(q.groups.end(), dn.groups.begin(), dn.groups.end());
  }
  q.allowed = group_mask(q.num_matched, dn.groups);
  return q;
}

DecoderLayer::DecoderLayer(ParamStore& store, const std::string& name, const ModelDims& dims, Rng& rng)
    : norm_self(store, name + ".norm_self", dims.d),
      self_attn(store, name + ".self_attn", dims.d, dims.heads, rng),
      norm_cross(store, name + ".norm_cross", dims.d),
      cross_attn(store, name + ".cross_attn", dims.d, dims.heads, rng),
      norm_ffn(store, name + ".norm_ffn", dims.d),
      ffn(store, name + ".ffn", dims.d, dims.d * dims.ffn_mult, rng) {}

MtcdDecoder::MtcdDecoder(ParamStore& store, const ModelDims& dims, Rng& rng) : dims_(dims) {
  dims.validate();
  for (int i = 0; i < dims.decoder_layers; ++i)
    layers_.emplace_back(store, "decoder.layer." + std::to_string(i), dims, rng);
  out_norm_ = nn::LayerNorm(store, "decoder.out_norm", dims.d);
  span_head = nn::SpanMlp(store, "decoder.span_head", dims.d, 2, rng);
  class_head = nn::Linear(store, "decoder.class_head", dims.d, 2, rng);
}

DecoderOutput MtcdDecoder::decode(Graph& g, const ParamStore& store, const QueryBatch& queries, Var x_s,
                                  Var memory, Var memory_pos, RunContext& ctx) const {
  const Eigen::Index n = queries.size();
  if (queries.position.rows() != n || queries.allowed.rows() != n || queries.allowed.cols() != n)
    throw ShapeError("decode: mask/embedding row mismatch");
  std::array<Var, 2> parts{x_s, memory};
  Var values = ag::concat_rows(parts);
  if (memory_pos.rows() != values.rows()) throw ShapeError("decode: memory positions row mismatch");
  Var keys = ag::add(values, memory_pos);

  Rng dummy(0);
  Rng& rng = ctx.rng ? *ctx.rng : dummy;
  DecoderOutput out;
  Var x = combine_queries(queries.content, queries.position);
  for (const auto& layer : layers_) {
    Var h = layer.norm_self.forward(g, store, x);
    Var hq = ag::add(h, queries.position);
    x = ag::add(x, ag::dropout(layer.self_attn.forward(g, store, hq, hq, h, &queries.allowed), ctx.dropout, rng));
    h = ag::add(layer.norm_cross.forward(g, store, x), queries.position);
    x = ag::add(x, ag::dropout(layer.cross_attn.forward(g, store, h, keys, values), ctx.dropout, rng));
    h = layer.norm_ffn.forward(g, store, x);
    x = ag::add(x, ag::dropout(layer.ffn.forward(g, store, h, ctx.dropout, rng), ctx.dropout, rng));
    Var y = out_norm_.forward(g, store, x);
    out.layers.push_back({span_head.forward(g, store, y), class_head.forward(g, store, y)});
  }
  return out;
}

}  // namespace msdetr
