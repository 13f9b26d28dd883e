#pragma once

#include <vector>

#include "msdetr/autograd.hpp"
#include "msdetr/model_dims.hpp"
#include "msdetr/nn.hpp"

namespace msdetr {

using ag::Graph;
using ag::Var;

enum class Tower { tmct, ssct };

struct EncoderOutput {
  Var x_s;     // 1 x d, salience-token output
  Var memory;  // L x d, per-clip outputs
  Var fused;   // L x d, pre-encoder fused video representation
};

/// Pre-norm transformer block: attention then feed-forward, each wrapped in
/// a residual connection.
struct AttentionBlock {
  nn::LayerNorm norm_attn;
  nn::MultiHeadAttention attn;
  nn::LayerNorm norm_ffn;
  nn::FeedForward ffn;

  AttentionBlock() = default;
  AttentionBlock(ParamStore& store, const std::string& name, const ModelDims& dims, Rng& rng);
  /// Self-attention when `context` is invalid, cross-attention otherwise.
  Var forward(Graph& g, const ParamStore& store, Var x, Var context, RunContext& ctx) const;
};

/// Motion-semantics disentangled encoder: clip features of each stream
/// attend to the query words in their own tower; the tower outputs are
/// concatenated and mapped back to d, a salience token is prepended, and a
/// self-attention stack yields (x_s, memory).
class MsdeEncoder {
 public:
  MsdeEncoder() = default;
  MsdeEncoder(ParamStore& store, const ModelDims& dims, const InputDims& inputs, Rng& rng);

  Var project_motion(Graph& g, const ParamStore& store, Var motion) const;
  Var project_semantic(Graph& g, const ParamStore& store, Var semantic) const;
  Var project_text(Graph& g, const ParamStore& store, Var text) const;

  /// queries: L x d (projected clips), text: M x d (projected words). Clip
  /// positions are added to the queries; words carry no position.
  Var cross_modal_tower(Graph& g, const ParamStore& store, Var queries, Var text, Tower which,
                        RunContext& ctx) const;

  /// phi(tmct (+) ssct): feature-dim concatenation then a 2d -> d affine map.
  Var fuse(Graph& g, const ParamStore& store, Var tmct_out, Var ssct_out) const;

  EncoderOutput encode(Graph& g, const ParamStore& store, Var fused, RunContext& ctx) const;

  /// Full path from raw stream features.
  EncoderOutput forward(Graph& g, const ParamStore& store, const Mat& motion, const Mat& semantic,
                        const Mat& text, RunContext& ctx) const;

  /// Positional rows for [salience slot; clips 0..L-1], (L + 1) x d.
  Var memory_positions(Graph& g, const ParamStore& store, int L) const;

  const ModelDims& dims() const { return dims_; }
  const InputDims& inputs() const { return inputs_; }

  nn::Linear fusion;  // phi
  ParamId salience_token;
  ParamId salience_pos;
  ParamId clip_pos;  // L_max x d, sinusoid-initialised, learned

 private:
  ModelDims dims_;
  InputDims inputs_;
  nn::Linear proj_motion_, proj_semantic_, proj_text_;
  std::vector<AttentionBlock> tmct_, ssct_, encoder_;
  nn::LayerNorm tmct_out_, ssct_out_, encoder_out_;
};

}  // namespace msdetr
