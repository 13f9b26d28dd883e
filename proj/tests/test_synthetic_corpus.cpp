#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "msdetr/errors.hpp"
#include "msdetr/synthetic_corpus.hpp"

using namespace msdetr;
namespace fs = std::filesystem;

namespace {

GenerationConfig small_cfg() {
  GenerationConfig c;
  c.num_videos = 6;
  c.clips_per_video = 32;
  c.segments_per_video = 4;
  return c;
}

// Independent re-derivation of target windows by scanning clip labels.
std::vector<std::pair<int, int>> scan_windows(const LatentVideo& lv, int scene, int action) {
  std::vector<std::pair<int, int>> out;
  const int L = static_cast<int>(lv.clip_scene.size());
  int i = 0;
  while (i < L) {
    if (lv.clip_scene[i] == scene && lv.clip_action[i] == action) {
      int j = i;
      while (j < L && lv.clip_scene[j] == scene && lv.clip_action[j] == action) ++j;
      out.emplace_back(i, j);
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("concept bank is deterministic, unit norm and spread") {
  const ConceptBank a = build_concept_bank(4, 5, {16, 16, 16}, 7);
  const ConceptBank b = build_concept_bank(4, 5, {16, 16, 16}, 7);
  REQUIRE(a.scenes.size() == 4);
  for (std::size_t i = 0; i < a.scenes.size(); ++i) {
    CHECK(a.scenes[i] == b.scenes[i]);
    CHECK(std::abs(a.scenes[i].norm() - 1.0) < 1e-6);
    for (std::size_t j = 0; j < i; ++j) CHECK(a.scenes[i].dot(a.scenes[j]) < kMaxConceptCosine);
  }
  for (std::size_t i = 0; i < a.actions.size(); ++i) {
    CHECK(std::abs(a.actions[i].norm() - 1.0) < 1e-6);
    for (std::size_t j = 0; j < i; ++j) CHECK(a.actions[i].dot(a.actions[j]) < kMaxConceptCosine);
  }
  CHECK(a.text_projection == b.text_projection);
  CHECK_THROWS_AS(build_concept_bank(1, 4, {16, 16, 16}, 7), GenerationError);
}

TEST_CASE("config validation") {
  GenerationConfig c = small_cfg();
  c.segments_per_video = 11;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.d_t = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_cfg();
  c.segments_per_video = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("synthesized pairs have aligned windows and distractors") {
  const GenerationConfig cfg = small_cfg();
  const ConceptBank bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), 3);
  for (int i = 0; i < 50; ++i) {
    Rng rng = derive_rng(5, i, 1);
    const SyntheticSample s = synthesize_pair(bank, cfg, rng, i);
    const LatentVideo& lv = s.latent_video;
    const int L = cfg.clips_per_video;
    REQUIRE(static_cast<int>(lv.clip_scene.size()) == L);
    const int ts = s.latent_query.scene, ta = s.latent_query.action;

    const auto expected = scan_windows(lv, ts, ta);
    REQUIRE(expected.size() == s.annotation.windows.size());
    for (std::size_t w = 0; w < expected.size(); ++w) {
      CHECK(std::abs(s.annotation.windows[w].start() - expected[w].first / double(L)) < 1e-12);
      CHECK(std::abs(s.annotation.windows[w].end() - expected[w].second / double(L)) < 1e-12);
    }

    bool scene_only = false, action_only = false;
    for (int c = 0; c < L; ++c) {
      scene_only |= lv.clip_scene[c] == ts && lv.clip_action[c] != ta;
      action_only |= lv.clip_scene[c] != ts && lv.clip_action[c] == ta;
      const bool inside = lv.clip_scene[c] == ts && lv.clip_action[c] == ta;
      CHECK((s.annotation.saliency_labels[c] >= 0) == inside);
      if (inside) CHECK(s.annotation.saliency_labels[c] == lv.clip_quality[c]);
    }
    CHECK(scene_only);
    CHECK(action_only);

    for (const auto& r : latent_runs(lv)) CHECK(r.length() >= 3);
    CHECK(s.video.num_clips() == L);
    CHECK(s.video.duration_s == doctest::Approx(L * cfg.clip_len_s));
  }
}

TEST_CASE("zero noise gives exact concepts and perfect nearest-concept recovery") {
  GenerationConfig cfg = small_cfg();
  cfg.feature_noise_sigma = 0.0;
  const ConceptBank bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), 4);
  Rng rng(9);
  const SyntheticSample s = synthesize_pair(bank, cfg, rng);
  const Mat sem = s.video.semantic.to_eigen();
  const Mat mot = s.video.motion.to_eigen();
  for (int c = 0; c < s.video.num_clips(); ++c) {
    if (s.annotation.saliency_labels[c] >= 0)
      CHECK((sem.row(c).transpose() - bank.scenes[s.latent_query.scene].cast<float>().cast<double>()).norm() == 0.0);
    int best_s = 0, best_a = 0;
    for (int k = 1; k < static_cast<int>(bank.scenes.size()); ++k)
      if (sem.row(c).dot(bank.scenes[k]) > sem.row(c).dot(bank.scenes[best_s])) best_s = k;
    for (int k = 1; k < static_cast<int>(bank.actions.size()); ++k)
      if (mot.row(c).dot(bank.actions[k]) > mot.row(c).dot(bank.actions[best_a])) best_a = k;
    CHECK(best_s == s.latent_video.clip_scene[c]);
    CHECK(best_a == s.latent_video.clip_action[c]);
  }
}

TEST_CASE("synthesis is deterministic per seed") {
  const GenerationConfig cfg = small_cfg();
  const ConceptBank bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), 3);
  Rng r1(42), r2(42);
  const SyntheticSample a = synthesize_pair(bank, cfg, r1);
  const SyntheticSample b = synthesize_pair(bank, cfg, r2);
  CHECK(a.video.motion == b.video.motion);
  CHECK(a.video.semantic == b.video.semantic);
  CHECK(a.annotation.text == b.annotation.text);
  CHECK(a.annotation.saliency_labels == b.annotation.saliency_labels);
}

TEST_CASE("quality labels") {
  CHECK(quality_from_noise(0.0) == 4);
  CHECK(quality_from_noise(1.05) == 4);
  CHECK(quality_from_noise(1.15) == 3);
  CHECK(quality_from_noise(1.35) == 1);
  CHECK(quality_from_noise(3.0) == 0);
}

namespace {

SyntheticSample sample_with_runs(const std::vector<std::pair<int, std::pair<int, int>>>& runs) {
  SyntheticSample s;
  for (const auto& [len, pair] : runs)
    for (int i = 0; i < len; ++i) {
      s.latent_video.clip_scene.push_back(pair.first);
      s.latent_video.clip_action.push_back(pair.second);
      s.latent_video.clip_quality.push_back(4);
    }
  s.video.vid = "v00000";
  s.annotation.qid = "q00000";
  s.annotation.vid = "v00000";
  s.annotation.polarity = Polarity::positive;
  return s;
}

}  // namespace

TEST_CASE("caption pairs keep the two longest runs of length >= 3") {
  GenerationConfig cfg = small_cfg();
  const ConceptBank bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), 3);
  Rng rng(1);
  {
    const SyntheticSample s = sample_with_runs({{2, {0, 0}}, {5, {1, 1}}, {4, {2, 2}}, {7, {3, 3}}});
    const auto caps = generate_caption_pairs(s, bank, cfg, rng);
    REQUIRE(caps.size() == 2);
    CHECK(caps[0].annotation.windows[0].span * 18 == doctest::Approx(7));
    CHECK(caps[1].annotation.windows[0].span * 18 == doctest::Approx(5));
    CHECK(caps[0].latent_query.scene == 3);
    CHECK(caps[1].latent_query.scene == 1);
  }
  {
    const SyntheticSample s = sample_with_runs({{2, {0, 0}}, {2, {1, 1}}, {2, {2, 2}}});
    CHECK(generate_caption_pairs(s, bank, cfg, rng).empty());
  }
  {
    const SyntheticSample s = sample_with_runs({{5, {0, 1}}, {3, {2, 2}}, {5, {1, 0}}});
    const auto caps = generate_caption_pairs(s, bank, cfg, rng);
    REQUIRE(caps.size() == 2);
    CHECK(caps[0].latent_query.scene == 0);
    CHECK(caps[1].latent_query.scene == 1);
  }
}

TEST_CASE("query rewrites") {
  const GenerationConfig cfg = small_cfg();
  const ConceptBank bank = build_concept_bank(cfg.n_scenes, cfg.n_actions, cfg.dims(), 3);
  for (int i = 0; i < 30; ++i) {
    Rng rng = derive_rng(8, i, 1);
    const SyntheticSample s = synthesize_pair(bank, cfg, rng, i);
    for (auto dim : {RewriteDimension::semantic, RewriteDimension::motion}) {
      const bool sem = dim == RewriteDimension::semantic;
      const SyntheticSample pos = rewrite_query(s, bank, cfg, dim, Polarity::positive, rng);
      const Vec& nv = sem ? pos.latent_query.scene_vec : pos.latent_query.action_vec;
      const Vec& ov = sem ? s.latent_query.scene_vec : s.latent_query.action_vec;
      CHECK(nv.dot(ov) >= kSynonymMinCosine);
      CHECK(pos.annotation.polarity == Polarity::positive);
      CHECK(pos.annotation.windows.size() == s.annotation.windows.size());

      const SyntheticSample neg = rewrite_query(s, bank, cfg, dim, Polarity::hard_negative, rng);
      CHECK(neg.annotation.polarity == Polarity::hard_negative);
      if (sem) {
        CHECK(neg.latent_query.scene != s.latent_query.scene);
        CHECK(neg.latent_query.action_vec == s.latent_query.action_vec);
      } else {
        CHECK(neg.latent_query.action != s.latent_query.action);
        CHECK(neg.latent_query.scene_vec == s.latent_query.scene_vec);
      }
      // The negative pair never matches the latent labels inside its windows.
      const int L = s.video.num_clips();
      for (const auto& w : neg.annotation.windows)
        for (int c = static_cast<int>(std::lround(w.start() * L)); c < std::lround(w.end() * L); ++c)
          CHECK_FALSE((s.latent_video.clip_scene[c] == neg.latent_query.scene &&
                       s.latent_video.clip_action[c] == neg.latent_query.action));
    }
  }
  Rng a(3), b(3);
  const SyntheticSample base = [&] {
    Rng r(1);
    return synthesize_pair(bank, cfg, r);
  }();
  CHECK(rewrite_query(base, bank, cfg, RewriteDimension::motion, Polarity::positive, a).annotation.text ==
        rewrite_query(base, bank, cfg, RewriteDimension::motion, Polarity::positive, b).annotation.text);
}

TEST_CASE("written datasets are byte identical for the same seed") {
  GenerationConfig cfg = small_cfg();
  cfg.num_videos = 3;
  cfg.val_videos = 1;
  const fs::path a = fs::temp_directory_path() / "msdetr_gen_a";
  const fs::path b = fs::temp_directory_path() / "msdetr_gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_dataset(generate_dataset(cfg), a);
  write_dataset(generate_dataset(cfg), b);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
  }
  CHECK(files > 10);
  const Manifest m = load_manifest(a / "train.jsonl");
  CHECK(validate_dataset(m.annotations, m.videos).errors.empty());
  const Manifest aux = load_manifest(a / "aux.jsonl");
  CHECK(validate_dataset(aux.annotations, aux.videos).errors.empty());
  CHECK(fs::exists(a / "val.jsonl"));
}
