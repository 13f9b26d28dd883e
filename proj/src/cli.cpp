#include "msdetr/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "msdetr/checkpoint.hpp"
#include "msdetr/config.hpp"
#include "msdetr/dataset.hpp"
#include "msdetr/errors.hpp"
#include "msdetr/synthetic_corpus.hpp"
#include "msdetr/trainer.hpp"

namespace msdetr {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
  if (!out) throw IOError("write failed: " + path.string());
}

const Dataset& pick_split(const DataDir& data, const std::string& split) {
  if (split == "auto") return data.val.positives().empty() ? data.train : data.val;
  return data.split(split);
}

std::string split_name(const DataDir& data, const std::string& split) {
  if (split == "auto") return data.val.positives().empty() ? "train" : "val";
  return split;
}

json config_with_overrides(const std::string& path, const std::vector<std::string>& extras,
                           std::optional<std::uint64_t> seed, const char* seed_key) {
  json j = read_json_file(path);
  apply_overrides(j, extras);
  if (seed) apply_overrides(j, {std::string(seed_key) + "=" + std::to_string(*seed)});
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"msdetr: joint moment retrieval and highlight detection on clip features"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, ckpt_path, report_path, qid, features_path, per_query_path;
  std::string split = "auto";
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset directory");
  gen->add_option("--config", config_path, "generation config JSON");
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", seed, "override the generation seed");
  gen->allow_extras();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "training config JSON");
  tr->add_option("--data", data_path, "dataset directory")->required();
  tr->add_option("--out", out_path, "run directory (logs, checkpoint/)")->required();
  tr->add_option("--seed", seed, "override the training seed");
  tr->allow_extras();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt_path, "checkpoint directory")->required();
  ev->add_option("--data", data_path, "dataset directory")->required();
  ev->add_option("--report", report_path, "metrics JSON output")->required();
  ev->add_option("--split", split, "train, val, aux or auto (val when present)");
  ev->add_option("--per-query", per_query_path, "optional per-query CSV output");

  auto* pr = app.add_subcommand("predict", "predict one query");
  pr->add_option("--ckpt", ckpt_path, "checkpoint directory")->required();
  pr->add_option("--qid", qid, "query id")->required();
  pr->add_option("--data", data_path, "dataset directory (default: the one recorded at training)");
  pr->add_option("--out", out_path, "write the JSON line here instead of stdout");

  auto* cu = app.add_subcommand("export-curves", "export per-clip salience scores as CSV");
  cu->add_option("--ckpt", ckpt_path, "checkpoint directory")->required();
  cu->add_option("--data", data_path, "dataset directory")->required();
  cu->add_option("--out", out_path, "CSV output path")->required();
  cu->add_option("--split", split, "train, val, aux or auto");

  auto* in = app.add_subcommand("inspect", "describe an MSDF feature file");
  in->add_option("--features", features_path, "MSDF file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*gen) {
      const json j = config_with_overrides(config_path, gen->remaining(), seed, "seed");
      const GenerationConfig cfg = generation_config_from_json(j);
      const GeneratedDataset data = generate_dataset(cfg);
      write_dataset(data, out_path);
      write_json_file(fs::path(out_path) / "generation_config.json", to_json(cfg));
      out << "wrote " << data.train.size() << " train, " << data.val.size() << " val, " << data.aux.size()
          << " aux records to " << out_path << '\n';
    } else if (*tr) {
      const json j = config_with_overrides(config_path, tr->remaining(), seed, "train.seed");
      const TrainConfig cfg = train_config_from_json(j);
      const DataDir data = load_data_dir(data_path);
      TrainOptions opts;
      opts.out_dir = fs::path(out_path);
      opts.progress = &out;
      opts.data_dir = fs::absolute(data_path).string();
      const TrainResult r = train(cfg, data, opts);
      write_text(fs::path(out_path) / "best_report.json", r.best_report.to_json() + "\n");
      out << "best epoch " << r.best_epoch << " map_avg " << r.best_report.map_avg << '\n';
    } else if (*ev) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
      const DataDir data = load_data_dir(data_path);
      const Dataset& d = pick_split(data, split);
      const std::vector<QueryEval> evals = collect_eval(*ck.model, d);
      if (evals.empty()) throw InputError("split '" + split_name(data, split) + "' has no positive pairs");
      const MetricsReport rep = compute_metrics(evals);
      write_text(report_path, rep.to_json() + "\n");
      if (!per_query_path.empty()) write_text(per_query_path, per_query_csv(evals));
      out << rep.to_json() << '\n';
    } else if (*pr) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
      if (data_path.empty()) data_path = ck.meta.value("data_dir", std::string());
      if (data_path.empty()) throw InputError("no --data given and the checkpoint records no data directory");
      const DataDir data = load_data_dir(data_path);
      const Example* ex = nullptr;
      for (const Dataset* d : {&data.train, &data.val, &data.aux})
        if (!ex) ex = d->find(qid);
      if (!ex) throw DataError("qid '" + qid + "' not found under " + data_path);
      const std::string line = prediction_json(ck.model->predict(*ex), *ex).dump() + "\n";
      if (out_path.empty())
        out << line;
      else
        write_text(out_path, line);
    } else if (*cu) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt_path);
      const DataDir data = load_data_dir(data_path);
      write_text(out_path, export_curves_csv(*ck.model, pick_split(data, split)));
    } else if (*in) {
      const Mat m = read_matrix_file(features_path);
      out << "rows " << m.rows() << "\ncols " << m.cols() << "\nmin " << m.minCoeff() << "\nmax " << m.maxCoeff()
          << "\nmean " << m.mean() << '\n';
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace msdetr
