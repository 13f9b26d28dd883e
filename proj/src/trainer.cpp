#include "msdetr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "msdetr/checkpoint.hpp"
#include "msdetr/errors.hpp"
#include "msdetr/losses.hpp"
#include "msdetr/synthetic_corpus.hpp"

namespace msdetr {

namespace fs = std::filesystem;

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  hd += o.hd;
  mr += o.mr;
  dn += o.dn;
  enc_neg += o.enc_neg;
  margin += o.margin;
  enc_cont += o.enc_cont;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const {
  return {hd * s, mr * s, dn * s, enc_neg * s, margin * s, enc_cont * s, total * s};
}

json StepLog::to_json() const {
  return json{{"step", step},         {"epoch", epoch},       {"aux", aux},
              {"hd", loss.hd},        {"mr", loss.mr},        {"dn", loss.dn},
              {"enc_neg", loss.enc_neg}, {"margin", loss.margin}, {"enc_cont", loss.enc_cont},
              {"total", loss.total},  {"grad_norm", grad_norm}, {"lr", lr}};
}

SampleLoss sample_loss(Graph& g, const MsDetr& model, const TrainConfig& cfg, const Example& ex,
                       const Mat* negative_text, Rng& rng, double dropout) {
  const LossWeights& w = cfg.loss;
  const int L = ex.num_clips();
  RunContext ctx{dropout, &rng};
  const DenoiseSet dn = make_denoise_set(ex.windows, cfg.noise, rng, 1.0 / L);
  const ForwardResult r = model.forward(g, ex.motion, ex.semantic, ex.text, &dn, ctx);
  const int K = r.queries.num_matched;
  const auto D = static_cast<Eigen::Index>(dn.size());
  SampleLoss out;
  for (const auto& lp : r.decoder.layers) {
    if (lp.moments.value().allFinite() && lp.logits.value().allFinite()) continue;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.total = g.constant(Mat::Constant(1, 1, nan));
    out.parts.total = nan;
    return out;
  }

  LossParts parts;
  const std::size_t n_layers = r.decoder.layers.size();
  const std::size_t first = w.aux_layers ? 0 : n_layers - 1;
  for (std::size_t li = first; li < n_layers; ++li) {
    const LayerPrediction& lp = r.decoder.layers[li];
    Var moments = ag::slice_rows(lp.moments, 0, K);
    Var logits = ag::slice_rows(lp.logits, 0, K);
    const MatchResult match =
        hungarian_match(moments.value(), foreground_prob(logits.value()), ex.windows, w.mr);
    Var mr = mr_loss(moments, logits, ex.windows, match, w.mr);
    parts.mr = parts.mr.valid() ? ag::add(parts.mr, mr) : mr;
    if (D > 0) {
      Var dl = denoise_loss(ag::slice_rows(lp.moments, K, D), ag::slice_rows(lp.logits, K, D), dn.tags,
                            dn.provenance, ex.windows, w.dn);
      parts.dn = parts.dn.valid() ? ag::add(parts.dn, dl) : dl;
    }
  }

  std::vector<int> in_gt(ex.labels.size());
  for (std::size_t i = 0; i < ex.labels.size(); ++i) in_gt[i] = ex.labels[i] >= 0 ? 1 : 0;
  parts.hd = hd_collab_loss(r.scores, r.guided.references, r.guided.top_k.indices, in_gt, ex.windows, w.hd,
                            w.hd_pos_weight);

  if (w.lambda2 > 0.0) {
    parts.margin = margin_loss(r.scores, sample_margin_pairs(ex.labels, rng), w.margin);
    Var neg_scores;
    if (negative_text) {
      neg_scores = model.salience(g, ex.motion, ex.semantic, *negative_text, ctx);
      parts.enc_neg = enc_neg_loss(neg_scores);
    }
    parts.enc_cont = rank_contrastive_loss(r.scores, ex.labels, neg_scores, w.temperature, w.rank_count,
                                           w.rank_strict);
  }

  out.total = total_loss(g, parts, w);
  auto val = [](Var v) { return v.valid() ? v.scalar() : 0.0; };
  out.parts = {val(parts.hd),     val(parts.mr),       val(parts.dn),      val(parts.enc_neg),
               val(parts.margin), val(parts.enc_cont), out.total.scalar()};
  return out;
}

AdamW::AdamW(const ParamStore& store, const OptimConfig& cfg) : cfg_(cfg), m_(store.zeros_like()), v_(store.zeros_like()) {}

void AdamW::step(ParamStore& store, const GradStore& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Mat& p = store.value(static_cast<int>(i));
    const Mat& gr = grads[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * gr;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * gr.cwiseProduct(gr);
    p *= 1.0 - cfg_.lr * cfg_.weight_decay;
    p.array() -= cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

double clip_grad_norm(GradStore& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& gr : grads) sq += gr.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& gr : grads) gr *= s;
  }
  return norm;
}

std::vector<QueryEval> collect_eval(const MsDetr& model, const Dataset& data) {
  std::vector<QueryEval> out;
  for (int i : data.positives()) {
    const Example& ex = data.examples[i];
    Prediction p = model.predict(ex);
    out.push_back(QueryEval{std::move(p.ranked), ex.windows, std::move(p.clip_scores), ex.labels});
  }
  return out;
}

MetricsReport evaluate(const MsDetr& model, const Dataset& data) {
  if (data.positives().empty()) throw InputError("evaluation dataset has no positive pairs");
  return compute_metrics(collect_eval(model, data));
}

MsDetr TrainResult::best_model() const {
  MsDetr m = model;
  if (best_params.empty()) return m;
  for (std::size_t i = 0; i < best_params.size(); ++i) m.params().value(static_cast<int>(i)) = best_params[i];
  return m;
}

InputDims input_dims_of(const Dataset& data) {
  if (data.examples.empty()) throw InputError("dataset is empty");
  const Example& e = data.examples.front();
  return InputDims{static_cast<int>(e.motion.cols()), static_cast<int>(e.semantic.cols()),
                   static_cast<int>(e.text.cols())};
}

namespace {

struct NegativePool {
  // vid -> texts of generated hard negatives on that video
  std::unordered_map<std::string, std::vector<const Mat*>> hard;
};

NegativePool build_pool(const DataDir& data) {
  NegativePool pool;
  for (const Dataset* d : {&data.train, &data.aux})
    for (const auto& e : d->examples)
      if (!e.positive()) pool.hard[e.vid].push_back(&e.text);
  return pool;
}

std::size_t pick(std::size_t n, Rng& rng) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

}  // namespace

TrainResult train(const TrainConfig& cfg, const DataDir& data, const TrainOptions& opts) {
  cfg.validate();
  const std::vector<int> train_pos = data.train.positives();
  if (train_pos.empty()) throw InputError("training split has no positive pairs");
  const std::vector<int> aux_pos = data.aux.positives();

  const Dataset* eval_set = &data.split(cfg.eval_split);
  if (eval_set->positives().empty()) eval_set = &data.train;

  TrainResult result{MsDetr(cfg.model_config(input_dims_of(data.train)), cfg.seed), {}, {}, -1, {}, {}};
  MsDetr& model = result.model;
  AdamW optim(model.params(), cfg.optim);
  Rng rng = derive_rng(cfg.seed, 0, 7);
  const NegativePool pool = build_pool(data);

  std::ofstream step_log, eval_log;
  if (opts.out_dir) {
    fs::create_directories(*opts.out_dir);
    step_log.open(*opts.out_dir / "train_log.jsonl", std::ios::trunc);
    eval_log.open(*opts.out_dir / "eval_log.jsonl", std::ios::trunc);
    if (!step_log || !eval_log) throw IOError("cannot write logs under " + opts.out_dir->string());
  }

  auto negative_for = [&](const Example& ex, const std::vector<const Example*>& batch, std::size_t slot) -> const Mat* {
    if (cfg.negatives == NegativeStrategy::none || cfg.loss.lambda2 <= 0.0) return nullptr;
    const auto hard = pool.hard.find(ex.vid);
    if (hard != pool.hard.end() && std::bernoulli_distribution(cfg.hard_negative_ratio)(rng))
      return hard->second[pick(hard->second.size(), rng)];
    if (batch.size() > 1) {
      const std::size_t shift = 1 + pick(batch.size() - 1, rng);
      const Example* other = batch[(slot + shift) % batch.size()];
      if (other->vid != ex.vid) return &other->text;
    }
    for (int attempt = 0; attempt < 16; ++attempt) {
      const Example& other = data.train.examples[train_pos[pick(train_pos.size(), rng)]];
      if (other.vid != ex.vid) return &other.text;
    }
    return nullptr;
  };

  auto run_eval = [&](int epoch) {
    const MetricsReport rep = evaluate(model, *eval_set);
    result.evals.push_back({epoch, rep});
    if (eval_log) {
      json j = json::parse(rep.to_json());
      j["epoch"] = epoch;
      eval_log << j.dump() << '\n';
      eval_log.flush();
    }
    if (opts.progress)
      *opts.progress << "epoch " << epoch << " map_avg " << rep.map_avg << " r1@0.5 " << rep.r1_at_050 << " hit@1 "
                     << rep.hit_at_1 << std::endl;
    if (result.best_epoch < 0 || rep.map_avg > result.best_report.map_avg) {
      result.best_epoch = epoch;
      result.best_report = rep;
      result.best_params.clear();
      for (std::size_t i = 0; i < model.params().size(); ++i)
        result.best_params.push_back(model.params().value(static_cast<int>(i)));
      if (opts.out_dir) {
        json meta{{"epoch", epoch}, {"steps", optim.steps()}, {"data_dir", opts.data_dir},
                  {"eval_split", eval_set == &data.train ? "train" : cfg.eval_split},
                  {"metrics", json::parse(rep.to_json())}};
        save_checkpoint(*opts.out_dir / "checkpoint", model, cfg, meta);
      }
    }
  };

  std::vector<int> order = train_pos;
  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      std::vector<const Example*> batch;
      bool aux = !aux_pos.empty() && cfg.aux_ratio > 0.0 && std::bernoulli_distribution(cfg.aux_ratio)(rng);
      if (aux) {
        for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(&data.aux.examples[aux_pos[pick(aux_pos.size(), rng)]]);
      } else {
        for (int b = 0; b < cfg.batch_size && cursor < order.size(); ++b)
          batch.push_back(&data.train.examples[order[cursor++]]);
      }

      GradStore grads = model.params().zeros_like();
      LossBreakdown sum;
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (std::size_t s = 0; s < batch.size(); ++s) {
        const Example& ex = *batch[s];
        const Mat* neg = negative_for(ex, batch, s);
        Graph g;
        SampleLoss sl = sample_loss(g, model, cfg, ex, neg, rng, cfg.dims.dropout);
        if (!std::isfinite(sl.parts.total)) {
          std::ostringstream msg;
          msg << "non-finite loss at step " << step + 1 << " (epoch " << epoch << ", batch qids:";
          for (const Example* e : batch) msg << ' ' << e->qid;
          msg << "; offending qid " << ex.qid << ')';
          if (opts.out_dir) {
            json dump{{"step", step + 1}, {"epoch", epoch}, {"qid", ex.qid}, {"aux", aux}};
            for (const Example* e : batch) dump["batch"].push_back(e->qid);
            write_json_file(*opts.out_dir / "divergence.json", dump);
          }
          throw DivergenceError(msg.str());
        }
        g.backward(ag::scale(sl.total, inv_b));
        g.accumulate_param_grads(grads);
        sum += sl.parts;
      }
      const double norm = clip_grad_norm(grads, cfg.optim.clip_norm);
      optim.step(model.params(), grads);
      ++step;
      StepLog log{step, epoch, aux, sum.scaled(inv_b), norm, cfg.optim.lr};
      if (step_log) step_log << log.to_json().dump() << '\n';
      result.steps.push_back(log);
    }
    if (cfg.eval_interval > 0 && epoch % cfg.eval_interval == 0) run_eval(epoch);
  }
  if (result.evals.empty() || result.evals.back().epoch != cfg.epochs) run_eval(cfg.epochs);
  return result;
}

json prediction_json(const Prediction& p, const Example& ex) {
  json windows = json::array();
  for (const auto& item : p.ranked.items) {
    const auto [s, e] = span_to_window(item.span, ex.duration_s);
    windows.push_back(json::array({s, e, item.score}));
  }
  json scores = json::array();
  for (double s : p.clip_scores) scores.push_back(s);
  return json{{"qid", ex.qid}, {"vid", ex.vid}, {"pred_relevant_windows", windows}, {"pred_saliency_scores", scores}};
}

std::string export_curves_csv(const MsDetr& model, const Dataset& data) {
  std::ostringstream os;
  os.precision(17);
  os << "qid,clip_index,raw_score,sigmoid_score\n";
  for (int i : data.positives()) {
    const Example& ex = data.examples[i];
    const Prediction p = model.predict(ex);
    for (std::size_t c = 0; c < p.clip_scores.size(); ++c)
      os << ex.qid << ',' << c << ',' << p.clip_scores[c] << ',' << 1.0 / (1.0 + std::exp(-p.clip_scores[c])) << '\n';
  }
  return os.str();
}

}  // namespace msdetr
