#include "msdetr/synthetic_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "msdetr/errors.hpp"

namespace msdetr {

namespace fs = std::filesystem;

namespace {

Vec random_unit(int dim, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n01(rng);
  const double norm = v.norm();
  return norm > 0 ? Vec(v / norm) : random_unit(dim, rng);
}

std::vector<Vec> spread_concepts(int count, int dim, Rng& rng) {
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      Vec cand = random_unit(dim, rng);
      bool ok = true;
      for (const auto& v : out) ok = ok && cand.dot(v) < kMaxConceptCosine;
      if (ok) {
        out.push_back(std::move(cand));
        placed = true;
      }
    }
    if (!placed) throw GenerationError("cannot place " + std::to_string(count) + " concepts in " +
                                       std::to_string(dim) + " dims with cosine < 0.5");
  }
  return out;
}

Mat noise_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n01;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = n01(rng);
  return m;
}

std::vector<int> labels_inside(const std::vector<MomentSpan>& windows, const std::vector<int>& quality) {
  const int L = static_cast<int>(quality.size());
  std::vector<int> out(L, -1);
  for (const auto& w : windows) {
    const int b = static_cast<int>(std::lround(w.start() * L));
    const int e = static_cast<int>(std::lround(w.end() * L));
    for (int i = std::max(0, b); i < std::min(L, e); ++i) out[i] = quality[i];
  }
  return out;
}

bool pair_in_video(const LatentVideo& lv, int scene, int action) {
  for (std::size_t i = 0; i < lv.clip_scene.size(); ++i)
    if (lv.clip_scene[i] == scene && lv.clip_action[i] == action) return true;
  return false;
}

}  // namespace

ConceptBank build_concept_bank(int n_scenes, int n_actions, const BankDims& dims, std::uint64_t seed,
                               int filler_tokens) {
  if (n_scenes < 2 || n_actions < 2) throw GenerationError("concept bank needs at least 2 scenes and 2 actions");
  if (dims.d_s < 1 || dims.d_m < 1 || dims.d_t < 1) throw GenerationError("concept dims must be positive");
  Rng rng(seed);
  ConceptBank bank;
  bank.seed = seed;
  bank.scenes = spread_concepts(n_scenes, dims.d_s, rng);
  bank.actions = spread_concepts(n_actions, dims.d_m, rng);
  const int src = dims.d_s + dims.d_m;
  bank.text_projection = noise_matrix(dims.d_t, src, rng) / std::sqrt(static_cast<double>(src) / 2.0);
  for (int i = 0; i < filler_tokens; ++i) bank.filler.push_back(random_unit(dims.d_t, rng));
  return bank;
}

void GenerationConfig::validate() const {
  if (num_videos < 1) throw ConfigError("num_videos must be >= 1");
  if (val_videos < 0) throw ConfigError("val_videos must be >= 0");
  if (segments_per_video < 3)
    throw ConfigError("segments_per_video must be >= 3 to place scene and action distractors");
  if (segments_per_video * 3 > clips_per_video)
    throw ConfigError("segments_per_video must be <= clips_per_video / 3");
  if (d_m < 8 || d_s < 8 || d_t < 8) throw ConfigError("feature dims must be >= 8");
  if (feature_noise_sigma < 0) throw ConfigError("feature_noise_sigma must be >= 0");
  if (text_tokens < 2) throw ConfigError("text_tokens must be >= 2");
  if (n_scenes < 2 || n_actions < 2) throw ConfigError("need at least 2 scenes and 2 actions");
  if (aux_pairs_per_video < 0 || rewrite_pos_per_dimension < 0 || rewrite_neg_per_dimension < 0)
    throw ConfigError("auxiliary counts must be >= 0");
  if (!(clip_len_s > 0)) throw ConfigError("clip_len_s must be positive");
}

std::vector<LatentRun> latent_runs(const LatentVideo& latent) {
  std::vector<LatentRun> runs;
  const int L = static_cast<int>(latent.clip_scene.size());
  int b = 0;
  for (int i = 1; i <= L; ++i) {
    if (i == L || latent.clip_scene[i] != latent.clip_scene[b] || latent.clip_action[i] != latent.clip_action[b]) {
      runs.push_back({b, i, latent.clip_scene[b], latent.clip_action[b]});
      b = i;
    }
  }
  return runs;
}

std::vector<MomentSpan> windows_for_pair(const LatentVideo& latent, int scene, int action) {
  const double L = static_cast<double>(latent.clip_scene.size());
  std::vector<MomentSpan> out;
  for (const auto& r : latent_runs(latent))
    if (r.scene == scene && r.action == action) out.push_back(MomentSpan::from_start_end(r.begin / L, r.end / L));
  return out;
}

int quality_from_noise(double rms_standardised) {
  const double excess = std::max(0.0, rms_standardised - 1.0);
  const int drop = static_cast<int>(std::floor(10.0 * excess));
  return std::clamp(4 - drop, 0, 4);
}

FeatureMatrix render_query(const ConceptBank& bank, const Vec& scene, const Vec& action, int text_tokens,
                           double sigma, Rng& rng) {
  const int ds = static_cast<int>(scene.size()), dm = static_cast<int>(action.size());
  const int dt = bank.d_t();
  Mat rows(text_tokens, dt);
  Vec src = Vec::Zero(ds + dm);
  src.head(ds) = scene;
  rows.row(0) = (bank.text_projection * src).transpose();
  src.setZero();
  src.tail(dm) = action;
  rows.row(1) = (bank.text_projection * src).transpose();
  for (int t = 2; t < text_tokens; ++t) rows.row(t) = bank.filler[(t - 2) % bank.filler.size()].transpose();
  rows += sigma * noise_matrix(text_tokens, dt, rng);
  return FeatureMatrix::from_eigen(rows);
}

SyntheticSample synthesize_pair(const ConceptBank& bank, const GenerationConfig& cfg, Rng& rng, int index) {
  cfg.validate();
  const int L = cfg.clips_per_video;
  const int S = cfg.segments_per_video;
  const int n_sc = static_cast<int>(bank.scenes.size());
  const int n_ac = static_cast<int>(bank.actions.size());
  if (n_sc < 2 || n_ac < 2) throw GenerationError("bank too small to place distractors");
  if (bank.d_s() != cfg.d_s || bank.d_m() != cfg.d_m || bank.d_t() != cfg.d_t)
    throw GenerationError("bank dims do not match generation config");

  // Segment lengths: 3 clips each, remainder spread uniformly.
  std::vector<int> lengths(S, 3);
  std::uniform_int_distribution<int> pick_seg(0, S - 1);
  for (int extra = L - 3 * S; extra > 0; --extra) ++lengths[pick_seg(rng)];

  std::uniform_int_distribution<int> pick_scene(0, n_sc - 1), pick_action(0, n_ac - 1);
  const int ts = pick_scene(rng), ta = pick_action(rng);
  auto other_scene = [&](int not_this) {
    int s;
    do s = pick_scene(rng); while (s == not_this);
    return s;
  };
  auto other_action = [&](int not_this) {
    int a;
    do a = pick_action(rng); while (a == not_this);
    return a;
  };

  // Roles: 0 target, 1 shares scene only, 2 shares action only, rest free.
  std::vector<int> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<int, int>> seg(S, {-1, -1});
  for (int k = 0; k < S; ++k) {
    const int role = order[k];
    if (role == 0) seg[k] = {ts, ta};
    else if (role == 1) seg[k] = {ts, other_action(ta)};
    else if (role == 2) seg[k] = {other_scene(ts), ta};
  }
  for (int k = 0; k < S; ++k) {
    if (seg[k].first >= 0) continue;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw GenerationError("cannot fill free segment without merging neighbours");
      std::pair<int, int> cand{pick_scene(rng), pick_action(rng)};
      const bool left_ok = k == 0 || seg[k - 1] != cand;
      const bool right_ok = k == S - 1 || seg[k + 1] != cand;
      if (left_ok && right_ok) {
        seg[k] = cand;
        break;
      }
    }
  }
  for (int k = 1; k < S; ++k)
    if (seg[k] == seg[k - 1]) throw GenerationError("adjacent segments share a latent pair");

  SyntheticSample out;
  LatentVideo& lv = out.latent_video;
  for (int k = 0; k < S; ++k)
    for (int i = 0; i < lengths[k]; ++i) {
      lv.clip_scene.push_back(seg[k].first);
      lv.clip_action.push_back(seg[k].second);
    }

  const double sigma = cfg.feature_noise_sigma;
  const Mat ns = noise_matrix(L, cfg.d_s, rng);
  const Mat nm = noise_matrix(L, cfg.d_m, rng);
  Mat semantic(L, cfg.d_s), motion(L, cfg.d_m);
  lv.clip_quality.resize(L);
  for (int i = 0; i < L; ++i) {
    semantic.row(i) = bank.scenes[lv.clip_scene[i]].transpose() + sigma * ns.row(i);
    motion.row(i) = bank.actions[lv.clip_action[i]].transpose() + sigma * nm.row(i);
    // Quality is read off the standardised draw, so it is defined for any
    // sigma and ranks clips by how far their features stray from the concept.
    const double rms = std::sqrt((ns.row(i).squaredNorm() + nm.row(i).squaredNorm()) /
                                 static_cast<double>(cfg.d_s + cfg.d_m));
    lv.clip_quality[i] = quality_from_noise(rms);
  }

  char id[32];
  std::snprintf(id, sizeof id, "%05d", index);
  out.video.vid = std::string("v") + id;
  out.video.semantic = FeatureMatrix::from_eigen(semantic);
  out.video.motion = FeatureMatrix::from_eigen(motion);
  out.video.clip_len_s = cfg.clip_len_s;
  out.video.duration_s = cfg.clip_len_s * L;

  LatentQuery& lq = out.latent_query;
  lq.scene = ts;
  lq.action = ta;
  lq.scene_vec = bank.scenes[ts];
  lq.action_vec = bank.actions[ta];

  AnnotationRecord& a = out.annotation;
  a.qid = std::string("q") + id;
  a.vid = out.video.vid;
  a.text = render_query(bank, lq.scene_vec, lq.action_vec, cfg.text_tokens, sigma, rng);
  a.windows = windows_for_pair(lv, ts, ta);
  a.saliency_labels = labels_inside(a.windows, lv.clip_quality);
  a.polarity = Polarity::positive;
  return out;
}

std::vector<SyntheticSample> generate_caption_pairs(const SyntheticSample& sample, const ConceptBank& bank,
                                                    const GenerationConfig& cfg, Rng& rng, int top_n,
                                                    int min_length) {
  std::vector<LatentRun> runs;
  for (const auto& r : latent_runs(sample.latent_video))
    if (r.length() >= min_length) runs.push_back(r);
  std::stable_sort(runs.begin(), runs.end(), [](const LatentRun& x, const LatentRun& y) {
    if (x.length() != y.length()) return x.length() > y.length();
    return x.begin < y.begin;
  });

  std::vector<SyntheticSample> out;
  std::vector<std::pair<int, int>> taken;
  for (const auto& r : runs) {
    if (static_cast<int>(out.size()) >= top_n) break;
    const std::pair<int, int> pair{r.scene, r.action};
    if (std::find(taken.begin(), taken.end(), pair) != taken.end()) continue;
    taken.push_back(pair);

    SyntheticSample s;
    s.video = sample.video;
    s.latent_video = sample.latent_video;
    s.latent_query.scene = r.scene;
    s.latent_query.action = r.action;
    s.latent_query.scene_vec = bank.scenes.at(r.scene);
    s.latent_query.action_vec = bank.actions.at(r.action);
    AnnotationRecord& a = s.annotation;
    a.qid = sample.annotation.qid + "_cap" + std::to_string(out.size());
    a.vid = sample.video.vid;
    a.text = render_query(bank, s.latent_query.scene_vec, s.latent_query.action_vec, cfg.text_tokens,
                          cfg.feature_noise_sigma, rng);
    a.windows = windows_for_pair(sample.latent_video, r.scene, r.action);
    a.saliency_labels = labels_inside(a.windows, sample.latent_video.clip_quality);
    a.polarity = Polarity::positive;
    out.push_back(std::move(s));
  }
  return out;
}

SyntheticSample rewrite_query(const SyntheticSample& sample, const ConceptBank& bank, const GenerationConfig& cfg,
                              RewriteDimension dimension, Polarity polarity, Rng& rng) {
  if (sample.annotation.polarity != Polarity::positive) throw GenerationError("rewrite needs a positive record");
  const LatentQuery& src = sample.latent_query;
  if (src.scene < 0 || src.action < 0) throw GenerationError("record has no latent target pair");

  SyntheticSample out = sample;
  LatentQuery& lq = out.latent_query;
  const bool semantic = dimension == RewriteDimension::semantic;
  const std::string tag = std::string(semantic ? "_sem" : "_mot") +
                          (polarity == Polarity::positive ? "_pos" : "_neg");

  if (polarity == Polarity::positive) {
    Vec& v = semantic ? lq.scene_vec : lq.action_vec;
    const Vec old = v;
    // Rotate by an angle below acos(0.9) inside the plane of v and a random
    // orthogonal direction.
    Vec u = random_unit(static_cast<int>(v.size()), rng);
    u -= u.dot(old) * old;
    if (u.norm() < 1e-12) u = random_unit(static_cast<int>(v.size()), rng) - old;
    u.normalize();
    std::uniform_real_distribution<double> angle(0.0, std::acos(kSynonymMinCosine) * 0.95);
    const double th = angle(rng);
    v = std::cos(th) * old + std::sin(th) * u;
    v.normalize();
    out.annotation.polarity = Polarity::positive;
  } else {
    const int n = static_cast<int>(semantic ? bank.scenes.size() : bank.actions.size());
    const int cur = semantic ? src.scene : src.action;
    std::vector<int> clean, any;
    for (int c = 0; c < n; ++c) {
      if (c == cur) continue;
      any.push_back(c);
      const int s = semantic ? c : src.scene;
      const int a = semantic ? src.action : c;
      if (!pair_in_video(sample.latent_video, s, a)) clean.push_back(c);
    }
    if (any.empty()) throw GenerationError("bank has no alternative concept for a hard negative");
    const auto& pool = clean.empty() ? any : clean;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const int repl = pool[pick(rng)];
    if (semantic) {
      lq.scene = repl;
      lq.scene_vec = bank.scenes[repl];
    } else {
      lq.action = repl;
      lq.action_vec = bank.actions[repl];
    }
    out.annotation.polarity = Polarity::hard_negative;
  }
  out.annotation.qid = sample.annotation.qid + tag;
  out.annotation.text = render_query(bank, lq.scene_vec, lq.action_vec, cfg.text_tokens, cfg.feature_noise_sigma, rng);
  return out;
}

Rng derive_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

GeneratedDataset generate_dataset(const GenerationConfig& cfg) {
  cfg.validate();
  GeneratedDataset out;
  out.bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), cfg.seed);
  const int total = cfg.num_videos + cfg.val_videos;
  for (int i = 0; i < total; ++i) {
    Rng rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(i), 1);
    SyntheticSample s = synthesize_pair(out.bank, cfg, rng, i);
    if (i >= cfg.num_videos) {
      out.val.push_back(std::move(s));
      continue;
    }
    Rng aux_rng = derive_rng(cfg.seed, static_cast<std::uint64_t>(i), 2);
    for (auto& c : generate_caption_pairs(s, out.bank, cfg, aux_rng, cfg.aux_pairs_per_video))
      out.aux.push_back(std::move(c));
    for (auto dim : {RewriteDimension::semantic, RewriteDimension::motion}) {
      const std::string base = s.annotation.qid;
      for (int k = 0; k < cfg.rewrite_pos_per_dimension; ++k) {
        auto r = rewrite_query(s, out.bank, cfg, dim, Polarity::positive, aux_rng);
        if (k > 0) r.annotation.qid += std::to_string(k);
        out.aux.push_back(std::move(r));
      }
      for (int k = 0; k < cfg.rewrite_neg_per_dimension; ++k) {
        auto r = rewrite_query(s, out.bank, cfg, dim, Polarity::hard_negative, aux_rng);
        if (k > 0) r.annotation.qid += std::to_string(k);
        out.aux.push_back(std::move(r));
      }
    }
    out.train.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const GeneratedDataset& data, const fs::path& dir) {
  const fs::path feat = dir / "features";
  std::error_code ec;
  fs::create_directories(feat, ec);
  if (ec) throw IOError("cannot create " + feat.string() + ": " + ec.message());

  std::vector<std::string> written_videos;
  auto emit = [&](const std::vector<SyntheticSample>& samples) {
    std::vector<ManifestLine> lines;
    for (const auto& s : samples) {
      const std::string mpath = "features/" + s.video.vid + "_motion.msdf";
      const std::string spath = "features/" + s.video.vid + "_semantic.msdf";
      const std::string tpath = "features/" + s.annotation.qid + "_text.msdf";
      if (std::find(written_videos.begin(), written_videos.end(), s.video.vid) == written_videos.end()) {
        write_feature_file(dir / mpath, s.video.motion);
        write_feature_file(dir / spath, s.video.semantic);
        written_videos.push_back(s.video.vid);
      }
      write_feature_file(dir / tpath, s.annotation.text);
      ManifestLine l;
      l.qid = s.annotation.qid;
      l.vid = s.video.vid;
      l.duration = s.video.duration_s;
      for (const auto& w : s.annotation.windows) l.relevant_windows.push_back(span_to_window(w, l.duration));
      l.saliency_scores = s.annotation.saliency_labels;
      l.motion_path = mpath;
      l.semantic_path = spath;
      l.text_path = tpath;
      l.polarity = s.annotation.polarity;
      lines.push_back(std::move(l));
    }
    return lines;
  };
  write_manifest(dir / "train.jsonl", emit(data.train));
  if (!data.val.empty()) write_manifest(dir / "val.jsonl", emit(data.val));
  write_manifest(dir / "aux.jsonl", emit(data.aux));
}

}  // namespace msdetr
