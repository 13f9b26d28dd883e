#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "msdetr/checkpoint.hpp"
#include "msdetr/errors.hpp"
#include "msdetr/trainer.hpp"
#include "small_corpus.hpp"
#include "support.hpp"

using namespace msdetr;
using namespace msdetr::testing;
namespace fs = std::filesystem;

namespace {

const DataDir& corpus() {
  static const DataDir d = to_data_dir(generate_dataset(tiny_generation()));
  return d;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msdetr_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("training is bitwise reproducible") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  TrainOptions oa, ob;
  oa.out_dir = a;
  ob.out_dir = b;
  const TrainResult ra = train(tiny_training(), corpus(), oa);
  const TrainResult rb = train(tiny_training(), corpus(), ob);
  REQUIRE(!ra.steps.empty());
  CHECK(slurp(a / "train_log.jsonl") == slurp(b / "train_log.jsonl"));
  CHECK(slurp(a / "eval_log.jsonl") == slurp(b / "eval_log.jsonl"));
  CHECK(ra.best_report == rb.best_report);

  TrainConfig other = tiny_training();
  other.seed = 1;
  const TrainResult rc = train(other, corpus());
  CHECK(rc.steps.front().loss.total != ra.steps.front().loss.total);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("checkpoints round-trip exactly") {
  const fs::path dir = scratch("ckpt");
  TrainOptions o;
  o.out_dir = dir;
  o.data_dir = "somewhere";
  const TrainResult r = train(tiny_training(), corpus(), o);
  const LoadedCheckpoint ck = load_checkpoint(dir / "checkpoint");
  CHECK(ck.meta["data_dir"] == "somewhere");
  CHECK(ck.meta["epoch"].get<int>() == r.best_epoch);
  const MsDetr best = r.best_model();
  for (std::size_t i = 0; i < best.params().size(); ++i)
    CHECK(ck.model->params().value(static_cast<int>(i)) == best.params().value(static_cast<int>(i)));
  const Dataset& eval_set = corpus().val;
  CHECK(evaluate(*ck.model, eval_set) == evaluate(best, eval_set));
  CHECK(to_json(ck.train_config) == to_json(tiny_training()));

  // A tampered shape is rejected.
  json index = read_json_file(dir / "checkpoint" / "index.json");
  const std::string first = index.begin().key();
  index[first] = json::array({1, 1});
  write_json_file(dir / "checkpoint" / "index.json", index);
  CHECK_THROWS_AS(load_checkpoint(dir / "checkpoint"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), IOError);
  fs::remove_all(dir);
}

TEST_CASE("evaluation is deterministic and rejects empty input") {
  MsDetr model(tiny_training().model_config(input_dims_of(corpus().train)), 3);
  const MetricsReport a = evaluate(model, corpus().train);
  CHECK(a == evaluate(model, corpus().train));
  CHECK(a.queries == corpus().train.positives().size());
  CHECK_THROWS_AS(evaluate(model, Dataset{}), InputError);

  DataDir empty;
  CHECK_THROWS_AS(train(tiny_training(), empty), InputError);
  CHECK_THROWS_AS(corpus().split("test"), InputError);
}

TEST_CASE("predictions have the documented shape") {
  const TrainConfig cfg = tiny_training();
  MsDetr model(cfg.model_config(input_dims_of(corpus().train)), 4);
  const Example& ex = corpus().train.examples[corpus().train.positives().front()];
  const Prediction p = model.predict(ex);
  CHECK(p.ranked.items.size() == static_cast<std::size_t>(cfg.K));
  CHECK(p.clip_scores.size() == static_cast<std::size_t>(ex.num_clips()));
  for (std::size_t i = 0; i < p.ranked.items.size(); ++i) {
    CHECK_NOTHROW(p.ranked.items[i].span.validate());
    if (i > 0) CHECK(p.ranked.items[i - 1].score >= p.ranked.items[i].score);
  }
  const json j = prediction_json(p, ex);
  CHECK(j["pred_relevant_windows"].size() == static_cast<std::size_t>(cfg.K));
  CHECK(j["pred_relevant_windows"][0].size() == 3);
  CHECK(j["pred_relevant_windows"][0][1].get<double>() <= ex.duration_s + 1e-9);
  CHECK(j["pred_saliency_scores"].size() == static_cast<std::size_t>(ex.num_clips()));

  const std::string csv = export_curves_csv(model, corpus().train);
  CHECK(csv.rfind("qid,clip_index,raw_score,sigmoid_score\n", 0) == 0);
}

TEST_CASE("denoise rows never change the matched predictions") {
  const TrainConfig cfg = tiny_training();
  MsDetr model(cfg.model_config(input_dims_of(corpus().train)), 5);
  const Example& ex = corpus().train.examples[corpus().train.positives().front()];
  Rng rng(1);
  const DenoiseSet dn = make_denoise_set(ex.windows, cfg.noise, rng, 1.0 / ex.num_clips());
  REQUIRE(dn.size() > 0);
  RunContext ctx;
  Graph g1, g2;
  const ForwardResult with = model.forward(g1, ex.motion, ex.semantic, ex.text, &dn, ctx);
  const ForwardResult without = model.forward(g2, ex.motion, ex.semantic, ex.text, nullptr, ctx);
  const Mat& a = with.decoder.final().moments.value();
  const Mat& b = without.decoder.final().moments.value();
  CHECK(a.topRows(cfg.K) == b);
  CHECK(with.decoder.final().logits.value().topRows(cfg.K) == without.decoder.final().logits.value());
}

TEST_CASE("learned query mode runs end to end") {
  TrainConfig cfg = tiny_training();
  cfg.query_mode = QueryMode::learned;
  cfg.epochs = 1;
  const TrainResult r = train(cfg, corpus());
  CHECK(r.best_epoch == 1);
  CHECK(std::isfinite(r.steps.back().loss.total));
}

TEST_CASE("contrastive terms vanish when disabled") {
  TrainConfig cfg = tiny_training();
  cfg.loss.lambda2 = 0.0;
  cfg.epochs = 1;
  for (const StepLog& s : train(cfg, corpus()).steps) {
    CHECK(s.loss.enc_neg == 0.0);
    CHECK(s.loss.margin == 0.0);
    CHECK(s.loss.enc_cont == 0.0);
  }
  cfg.loss.lambda2 = 1.0;
  cfg.hard_negative_ratio = 1.0;
  double neg = 0.0;
  for (const StepLog& s : train(cfg, corpus()).steps) neg += s.loss.enc_neg;
  CHECK(neg > 0.0);
}

TEST_CASE("AdamW and gradient clipping") {
  ParamStore store;
  const ParamId p = store.add("w", Mat::Constant(1, 2, 1.0));
  OptimConfig oc;
  oc.lr = 0.1;
  oc.weight_decay = 0.01;
  AdamW opt(store, oc);
  GradStore grads{Mat(1, 2)};
  grads[0] << 0.5, -2.0;
  opt.step(store, grads);
  // First step: bias-corrected m/sqrt(v) = sign(g); decay applied first.
  const double decayed = 1.0 * (1 - 0.1 * 0.01);
  CHECK(store.value(p)(0, 0) == doctest::Approx(decayed - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(store.value(p)(0, 1) == doctest::Approx(decayed + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps() == 1);

  GradStore big{Mat::Constant(1, 2, 3.0), Mat::Constant(1, 1, 4.0)};
  const double norm = clip_grad_norm(big, 1.0);
  CHECK(norm == doctest::Approx(std::sqrt(34.0)));
  CHECK(std::sqrt(big[0].squaredNorm() + big[1].squaredNorm()) == doctest::Approx(1.0));
  GradStore small{Mat::Constant(1, 1, 0.5)};
  clip_grad_norm(small, 1.0);
  CHECK(small[0](0, 0) == 0.5);
}

TEST_CASE("non-finite losses stop training with a dump") {
  DataDir bad = corpus();
  for (auto& e : bad.train.examples) e.motion(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const fs::path dir = scratch("diverge");
  TrainOptions o;
  o.out_dir = dir;
  CHECK_THROWS_AS(train(tiny_training(), bad, o), DivergenceError);
  CHECK(fs::exists(dir / "divergence.json"));
  fs::remove_all(dir);
}
