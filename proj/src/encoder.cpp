#include "msdetr/encoder.hpp"

#include <array>

#include "msdetr/errors.hpp"

namespace msdetr {

void ModelDims::validate() const {
  if (d <= 0 || heads <= 0 || d % heads != 0) throw ConfigError("model dim must be divisible by heads");
  if (d % 4 != 0) throw ConfigError("model dim must be divisible by 4");
  if (tower_layers < 1 || encoder_layers < 1 || decoder_layers < 1) throw ConfigError("layer counts must be >= 1");
  if (L_max < 1) throw ConfigError("L_max must be >= 1");
  if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

AttentionBlock::AttentionBlock(ParamStore& store, const std::string& name, const ModelDims& dims, Rng& rng)
    : norm_attn(store, name + ".norm_attn", dims.d),
      attn(store, name + ".attn", dims.d, dims.heads, rng),
      norm_ffn(store, name + ".norm_ffn", dims.d),
      ffn(store, name + ".ffn", dims.d, dims.d * dims.ffn_mult, rng) {}

Var AttentionBlock::forward(Graph& g, const ParamStore& store, Var x, Var context, RunContext& ctx) const {
  Rng dummy(0);
  Rng& rng = ctx.rng ? *ctx.rng : dummy;
  Var h = norm_attn.forward(g, store, x);
  Var kv = context.valid() ? context : h;
  x = ag::add(x, ag::dropout(attn.forward(g, store, h, kv, kv), ctx.dropout, rng));
  h = norm_ffn.forward(g, store, x);
  return ag::add(x, ag::dropout(ffn.forward(g, store, h, ctx.dropout, rng), ctx.dropout, rng));
}

MsdeEncoder::MsdeEncoder(ParamStore& store, const ModelDims& dims, const InputDims& inputs, Rng& rng)
    : dims_(dims), inputs_(inputs) {
  dims.validate();
  const int d = dims.d;
  proj_motion_ = nn::Linear(store, "encoder.proj_motion", inputs.d_m, d, rng);
  proj_semantic_ = nn::Linear(store, "encoder.proj_semantic", inputs.d_s, d, rng);
  proj_text_ = nn::Linear(store, "encoder.proj_text", inputs.d_t, d, rng);
  clip_pos = store.add("encoder.clip_pos", nn::sinusoid_table(dims.L_max, d));
  for (int i = 0; i < dims.tower_layers; ++i) {
    tmct_.emplace_back(store, "encoder.tmct." + std::to_string(i), dims, rng);
    ssct_.emplace_back(store, "encoder.ssct." + std::to_string(i), dims, rng);
  }
  tmct_out_ = nn::LayerNorm(store, "encoder.tmct.out_norm", d);
  ssct_out_ = nn::LayerNorm(store, "encoder.ssct.out_norm", d);
  fusion = nn::Linear(store, "encoder.fusion", 2 * d, d, rng);
  std::normal_distribution<double> n01;
  Mat token(1, d), slot(1, d);
  for (int c = 0; c < d; ++c) token(0, c) = n01(rng);
  for (int c = 0; c < d; ++c) slot(0, c) = 0.1 * n01(rng);
  salience_token = store.add("encoder.salience_token", token);
  salience_pos = store.add("encoder.salience_pos", slot);
  for (int i = 0; i < dims.encoder_layers; ++i)
    encoder_.emplace_back(store, "encoder.self." + std::to_string(i), dims, rng);
  encoder_out_ = nn::LayerNorm(store, "encoder.self.out_norm", d);
}

Var MsdeEncoder::project_motion(Graph& g, const ParamStore& store, Var motion) const {
  return proj_motion_.forward(g, store, motion);
}
Var MsdeEncoder::project_semantic(Graph& g, const ParamStore& store, Var semantic) const {
  return proj_semantic_.forward(g, store, semantic);
}
Var MsdeEncoder::project_text(Graph& g, const ParamStore& store, Var text) const {
  return proj_text_.forward(g, store, text);
}

Var MsdeEncoder::cross_modal_tower(Graph& g, const ParamStore& store, Var queries, Var text, Tower which,
                                   RunContext& ctx) const {
  if (text.rows() == 0) throw InputError("cross-modal tower needs at least one text token");
  const Eigen::Index L = queries.rows();
  if (L < 1 || L > dims_.L_max) throw InputError("clip count out of range for the tower");
  const auto& blocks = which == Tower::tmct ? tmct_ : ssct_;
  const auto& out_norm = which == Tower::tmct ? tmct_out_ : ssct_out_;
  Var x = ag::add(queries, ag::slice_rows(g.param(store, clip_pos), 0, L));
  for (const auto& b : blocks) x = b.forward(g, store, x, text, ctx);
  return out_norm.forward(g, store, x);
}

Var MsdeEncoder::fuse(Graph& g, const ParamStore& store, Var tmct_out, Var ssct_out) const {
  if (tmct_out.rows() != ssct_out.rows()) throw ShapeError("fuse: tower outputs differ in clip count");
  return fusion.forward(g, store, ag::concat_cols(tmct_out, ssct_out));
}

Var MsdeEncoder::memory_positions(Graph& g, const ParamStore& store, int L) const {
  std::array<Var, 2> parts{g.param(store, salience_pos), ag::slice_rows(g.param(store, clip_pos), 0, L)};
  return ag::concat_rows(parts);
}

EncoderOutput MsdeEncoder::encode(Graph& g, const ParamStore& store, Var fused, RunContext& ctx) const {
  const Eigen::Index L = fused.rows();
  if (L < 1) throw InputError("encode: empty video");
  if (L > dims_.L_max)
    throw InputError("encode: " + std::to_string(L) + " clips exceeds L_max " + std::to_string(dims_.L_max));
  std::array<Var, 2> parts{g.param(store, salience_token), fused};
  Var seq = ag::add(ag::concat_rows(parts), memory_positions(g, store, static_cast<int>(L)));
  for (const auto& b : encoder_) seq = b.forward(g, store, seq, Var(), ctx);
  seq = encoder_out_.forward(g, store, seq);
  return EncoderOutput{ag::slice_rows(seq, 0, 1), ag::slice_rows(seq, 1, L), fused};
}

EncoderOutput MsdeEncoder::forward(Graph& g, const ParamStore& store, const Mat& motion, const Mat& semantic,
                                   const Mat& text, RunContext& ctx) const {
  if (motion.rows() != semantic.rows()) throw ShapeError("motion and semantic clip counts differ");
  if (text.rows() == 0) throw InputError("query has no text tokens");
  if (motion.rows() > dims_.L_max) throw InputError("video longer than L_max");
  Var t = project_text(g, store, g.constant(text));
  Var m = project_motion(g, store, g.constant(motion));
  Var s = project_semantic(g, store, g.constant(semantic));
  Var tm = cross_modal_tower(g, store, m, t, Tower::tmct, ctx);
  Var ss = cross_modal_tower(g, store, s, t, Tower::ssct, ctx);
  return encode(g, store, fuse(g, store, tm, ss), ctx);
}

}  // namespace msdetr
