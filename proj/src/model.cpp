#include "msdetr/model.hpp"

#include <algorithm>

#include "msdetr/errors.hpp"
#include "msdetr/losses.hpp"

namespace msdetr {

void ModelConfig::validate() const {
  dims.validate();
  if (K < 1) throw ConfigError("K must be >= 1");
  if (inputs.d_m < 1 || inputs.d_s < 1 || inputs.d_t < 1) throw ConfigError("input dims must be >= 1");
}

namespace {

Rng init_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d6f64u};
  return Rng(seq);
}

}  // namespace

MsDetr::MsDetr(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng = init_rng(seed);
  encoder_ = MsdeEncoder(store_, cfg.dims, cfg.inputs, rng);
  saliency_ = SaliencyHead(store_, cfg.dims, rng);
  decoder_ = MtcdDecoder(store_, cfg.dims, rng);
  if (cfg.query_mode == QueryMode::learned) {
    std::normal_distribution<double> n01;
    Mat embed(cfg.K, cfg.dims.d);
    for (Eigen::Index r = 0; r < embed.rows(); ++r)
      for (Eigen::Index c = 0; c < embed.cols(); ++c) embed(r, c) = n01(rng);
    query_embed_ = store_.add("decoder.query_embed", embed);
  }
}

Var MsDetr::salience(Graph& g, const Mat& motion, const Mat& semantic, const Mat& text, RunContext& ctx) const {
  const EncoderOutput enc = encoder_.forward(g, store_, motion, semantic, text, ctx);
  return saliency_.scores(g, store_, enc.x_s, enc.memory);
}

ForwardResult MsDetr::forward(Graph& g, const Mat& motion, const Mat& semantic, const Mat& text, const DenoiseSet* dn,
                              RunContext& ctx) const {
  ForwardResult r;
  r.encoder = encoder_.forward(g, store_, motion, semantic, text, ctx);
  r.scores = saliency_.scores(g, store_, r.encoder.x_s, r.encoder.memory);
  const Vec raw = r.scores.value().col(0);
  r.guided = saliency_.guide(g, store_, r.encoder.memory, raw, cfg_.K);
  Var content = r.guided.content;
  Var position = r.guided.positions;
  if (cfg_.query_mode == QueryMode::learned) {
    content = g.constant(Mat::Zero(cfg_.K, cfg_.dims.d));
    position = g.param(store_, query_embed_);
  }
  static const DenoiseSet kNone;
  r.queries = build_query_batch(content, position, dn ? *dn : kNone, cfg_.dims.d);
  const int L = static_cast<int>(motion.rows());
  Var memory_pos = encoder_.memory_positions(g, store_, L);
  r.decoder = decoder_.decode(g, store_, r.queries, r.encoder.x_s, r.encoder.memory, memory_pos, ctx);
  return r;
}

MomentSpan clip_prediction(double center, double span) {
  const double s = std::clamp(center - span / 2.0, 0.0, 1.0);
  const double e = std::clamp(center + span / 2.0, 0.0, 1.0);
  return MomentSpan::from_start_end(s, e);
}

Prediction MsDetr::predict(const Example& ex) const {
  Graph g;
  RunContext ctx;
  const ForwardResult r = forward(g, ex.motion, ex.semantic, ex.text, nullptr, ctx);
  const Mat& moments = r.decoder.final().moments.value();
  const Vec fg = foreground_prob(r.decoder.final().logits.value());
  std::vector<ScoredSpan> items;
  for (int k = 0; k < r.queries.num_matched; ++k)
    items.push_back({clip_prediction(moments(k, 0), moments(k, 1)), fg(k)});
  Prediction p;
  p.ranked = rank_predictions(ex.qid, std::move(items));
  const Mat& s = r.scores.value();
  p.clip_scores.assign(s.data(), s.data() + s.size());
  return p;
}

std::string to_string(QueryMode mode) { return mode == QueryMode::guided ? "guided" : "learned"; }

QueryMode query_mode_from_string(const std::string& s) {
  if (s == "guided") return QueryMode::guided;
  if (s == "learned") return QueryMode::learned;
  throw ConfigError("query_mode must be 'guided' or 'learned', got '" + s + "'");
}

}  // namespace msdetr
