#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msdetr/feature_store.hpp"

namespace msdetr {

struct BankDims {
  int d_s = 32;
  int d_m = 32;
  int d_t = 32;
};

/// Latent concept spaces standing in for pretrained semantic (scene) and
/// motion (action) features, plus a fixed text projection so a query can be
/// rendered as word-level features.
struct ConceptBank {
  std::vector<Vec> scenes;   // unit norm, d_s
  std::vector<Vec> actions;  // unit norm, d_m
  Mat text_projection;       // d_t x (d_s + d_m)
  std::vector<Vec> filler;   // query-independent "function word" tokens, d_t
  std::uint64_t seed = 0;

  int d_s() const { return static_cast<int>(scenes.front().size()); }
  int d_m() const { return static_cast<int>(actions.front().size()); }
  int d_t() const { return static_cast<int>(text_projection.rows()); }
};

/// Pairwise cosine between distinct concepts of one kind stays below this.
inline constexpr double kMaxConceptCosine = 0.5;

ConceptBank build_concept_bank(int n_scenes, int n_actions, const BankDims& dims, std::uint64_t seed,
                               int filler_tokens = 2);

struct GenerationConfig {
  int num_videos = 64;
  int val_videos = 0;
  int clips_per_video = 32;
  int segments_per_video = 4;
  int d_m = 32;
  int d_s = 32;
  int d_t = 32;
  double feature_noise_sigma = 0.05;
  /// Caption-interval pairs kept per video (the two longest runs).
  int aux_pairs_per_video = 2;
  int rewrite_pos_per_dimension = 1;
  int rewrite_neg_per_dimension = 1;
  int n_scenes = 8;
  int n_actions = 8;
  int text_tokens = 4;
  double clip_len_s = 2.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on infeasible settings.
  void validate() const;
  BankDims dims() const { return {d_s, d_m, d_t}; }
};

/// Per-clip latent labels of a generated video.
struct LatentVideo {
  std::vector<int> clip_scene;
  std::vector<int> clip_action;
  /// Noise-derived quality on the 0..4 scale for every clip.
  std::vector<int> clip_quality;
};

struct LatentQuery {
  int scene = -1;
  int action = -1;
  Vec scene_vec;
  Vec action_vec;
};

struct SyntheticSample {
  VideoRecord video;
  AnnotationRecord annotation;
  LatentVideo latent_video;
  LatentQuery latent_query;
};

/// Maximal run of clips sharing one latent (scene, action) pair; [begin, end).
struct LatentRun {
  int begin = 0;
  int end = 0;
  int scene = -1;
  int action = -1;
  int length() const { return end - begin; }
};

std::vector<LatentRun> latent_runs(const LatentVideo& latent);

/// Ground-truth windows of a (scene, action) pair: every maximal run whose
/// labels match both, as normalised spans over `num_clips`.
std::vector<MomentSpan> windows_for_pair(const LatentVideo& latent, int scene, int action);

/// Quality label from a standardised noise draw (two streams pooled):
/// 4 - floor(10 * max(0, rms - 1)), clipped to 0..4.
int quality_from_noise(double rms_standardised);

/// One video of contiguous segments plus one positive query. `index`
/// names the pair ("v00012"/"q00012").
SyntheticSample synthesize_pair(const ConceptBank& bank, const GenerationConfig& cfg, Rng& rng,
                                int index = 0);

/// Renders the M x d_t query features for a (scene, action) pair.
FeatureMatrix render_query(const ConceptBank& bank, const Vec& scene, const Vec& action,
                           int text_tokens, double sigma, Rng& rng);

/// Caption-interval analogue: runs shorter than `min_length` clips are
/// dropped, the remaining distinct pairs are ranked by their longest run
/// (ties: earlier start), and the top `top_n` become new positive records.
std::vector<SyntheticSample> generate_caption_pairs(const SyntheticSample& sample,
                                                    const ConceptBank& bank,
                                                    const GenerationConfig& cfg, Rng& rng,
                                                    int top_n = 2, int min_length = 3);

enum class RewriteDimension { semantic, motion };

/// Query-rewrite analogue. Positive: the target concept of `dimension` is
/// rotated to cosine >= 0.9 (synonym). Negative: it is swapped for another
/// bank concept (antonym), yielding a hard negative on the same windows.
SyntheticSample rewrite_query(const SyntheticSample& sample, const ConceptBank& bank,
                              const GenerationConfig& cfg, RewriteDimension dimension,
                              Polarity polarity, Rng& rng);

inline constexpr double kSynonymMinCosine = 0.9;

/// Derives an independent generator for (seed, index, stream).
Rng derive_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

struct GeneratedDataset {
  ConceptBank bank;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> val;
  std::vector<SyntheticSample> aux;
};

GeneratedDataset generate_dataset(const GenerationConfig& cfg);

/// Writes features/ plus train.jsonl, val.jsonl (when non-empty) and
/// aux.jsonl under `dir`.
void write_dataset(const GeneratedDataset& data, const std::filesystem::path& dir);

}  // namespace msdetr
