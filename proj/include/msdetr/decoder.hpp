#pragma once

#include <vector>

#include "msdetr/autograd.hpp"
#include "msdetr/denoise.hpp"
#include "msdetr/encoder.hpp"
#include "msdetr/model_dims.hpp"
#include "msdetr/nn.hpp"

namespace msdetr {

/// Decoder input rows: K matched queries followed by D denoise queries.
struct QueryBatch {
  Var content;   // (K + D) x d
  Var position;  // (K + D) x d
  ag::BoolMat allowed;  // self-attention mask, true where row may attend column
  std::vector<QueryTag> tags;
  std::vector<int> provenance;  // ground-truth index, -1 for matched rows
  std::vector<int> groups;      // replica group, -1 for matched rows
  int num_matched = 0;

  Eigen::Index size() const { return content.rows(); }
};

/// Q_c + Q_p.
Var combine_queries(Var content, Var position);

/// Self-attention mask: matched rows see only matched rows; a denoise row
/// sees only rows of its own replica group.
ag::BoolMat group_mask(int num_matched, const std::vector<int>& groups);

/// Matched rows (content, position) plus denoise rows whose position part is
/// positional_encode(noised span) and whose content part is zero. An empty
/// denoise set yields a batch of matched rows only.
QueryBatch build_query_batch(Var content, Var position, const DenoiseSet& dn, int d);

struct LayerPrediction {
  Var moments;  // N x 2 (center, span), sigmoid
  Var logits;   // N x 2, column 1 = foreground
};

struct DecoderOutput {
  std::vector<LayerPrediction> layers;  // one per decoder layer, last is primary
  const LayerPrediction& final() const { return layers.back(); }
};

struct DecoderLayer {
  nn::LayerNorm norm_self;
  nn::MultiHeadAttention self_attn;
  nn::LayerNorm norm_cross;
  nn::MultiHeadAttention cross_attn;
  nn::LayerNorm norm_ffn;
  nn::FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(ParamStore& store, const std::string& name, const ModelDims& dims, Rng& rng);
};

/// Pre-norm decoder: masked self-attention over the queries, cross-attention
/// to [x_s; memory], feed-forward. Query positions are re-added to the
/// attention queries/keys of every layer. Shared prediction heads run after
/// every layer.
class MtcdDecoder {
 public:
  MtcdDecoder() = default;
  MtcdDecoder(ParamStore& store, const ModelDims& dims, Rng& rng);

  /// memory_pos: (L + 1) x d positions of [salience slot; clips].
  DecoderOutput decode(Graph& g, const ParamStore& store, const QueryBatch& queries, Var x_s, Var memory,
                       Var memory_pos, RunContext& ctx) const;

  nn::SpanMlp span_head;
  nn::Linear class_head;

 private:
  ModelDims dims_;
  std::vector<DecoderLayer> layers_;
  nn::LayerNorm out_norm_;
};

}  // namespace msdetr
