#include "msdetr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "msdetr/errors.hpp"

namespace msdetr {

namespace fs = std::filesystem;

namespace {

// Reads fields out of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + key + ": wrong type");
    }
  }

  ObjectReader child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return ObjectReader(j_.contains(key) ? j_.at(key) : kEmpty, path_ + key + ".");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path_ + it.key() + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config " + path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json terms_json(const TermWeights& t) { return json{{"l1", t.l1}, {"giou", t.giou}, {"ce", t.ce}}; }

void read_terms(ObjectReader r, TermWeights& t) {
  r.get("l1", t.l1);
  r.get("giou", t.giou);
  r.get("ce", t.ce);
  r.finish();
}

json dims_json(const ModelDims& d) {
  return json{{"d", d.d},
              {"heads", d.heads},
              {"tower_layers", d.tower_layers},
              {"encoder_layers", d.encoder_layers},
              {"decoder_layers", d.decoder_layers},
              {"L_max", d.L_max},
              {"ffn_mult", d.ffn_mult},
              {"dropout", d.dropout}};
}

void read_dims(ObjectReader& r, ModelDims& d) {
  r.get("d", d.d);
  r.get("heads", d.heads);
  r.get("tower_layers", d.tower_layers);
  r.get("encoder_layers", d.encoder_layers);
  r.get("decoder_layers", d.decoder_layers);
  r.get("L_max", d.L_max);
  r.get("ffn_mult", d.ffn_mult);
  r.get("dropout", d.dropout);
}

std::string negatives_name(NegativeStrategy s) { return s == NegativeStrategy::none ? "none" : "in_batch"; }

NegativeStrategy negatives_from(const std::string& s) {
  if (s == "none") return NegativeStrategy::none;
  if (s == "in_batch") return NegativeStrategy::in_batch;
  throw ConfigError("train.negatives must be 'none' or 'in_batch', got '" + s + "'");
}

}  // namespace

void TrainConfig::validate() const {
  dims.validate();
  loss.validate();
  noise.validate();
  if (K < 1) throw ConfigError("model.K must be >= 1");
  if (!(optim.lr > 0)) throw ConfigError("optim.lr must be > 0");
  if (optim.weight_decay < 0 || optim.clip_norm < 0) throw ConfigError("optim.weight_decay/clip_norm must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (eval_interval < 0) throw ConfigError("train.eval_interval must be >= 0");
  if (aux_ratio < 0 || aux_ratio >= 1) throw ConfigError("train.aux_ratio must lie in [0, 1)");
  if (hard_negative_ratio < 0 || hard_negative_ratio > 1) throw ConfigError("train.hard_negative_ratio must lie in [0, 1]");
  if (eval_split != "train" && eval_split != "val" && eval_split != "aux")
    throw ConfigError("train.eval_split must be train, val or aux");
}

ModelConfig TrainConfig::model_config(const InputDims& inputs) const {
  return ModelConfig{dims, inputs, K, query_mode};
}

json to_json(const TrainConfig& c) {
  json model = dims_json(c.dims);
  model["K"] = c.K;
  model["query_mode"] = to_string(c.query_mode);
  json loss{{"mr", terms_json(c.loss.mr)},
            {"hd", terms_json(c.loss.hd)},
            {"dn", terms_json(c.loss.dn)},
            {"hd_pos_weight", c.loss.hd_pos_weight},
            {"lambda1", c.loss.lambda1},
            {"lambda2", c.loss.lambda2},
            {"margin", c.loss.margin},
            {"temperature", c.loss.temperature},
            {"rank_count", c.loss.rank_count},
            {"rank_strict", c.loss.rank_strict},
            {"aux_layers", c.loss.aux_layers}};
  json noise{{"enabled", c.noise.enabled},
             {"delta2", c.noise.delta2},
             {"pos_replicas", c.noise.pos_replicas},
             {"neg_replicas", c.noise.neg_replicas}};
  json optim{{"lr", c.optim.lr},       {"weight_decay", c.optim.weight_decay}, {"clip_norm", c.optim.clip_norm},
             {"beta1", c.optim.beta1}, {"beta2", c.optim.beta2},               {"eps", c.optim.eps}};
  json train{{"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"eval_interval", c.eval_interval},
             {"seed", c.seed},
             {"aux_ratio", c.aux_ratio},
             {"negatives", negatives_name(c.negatives)},
             {"hard_negative_ratio", c.hard_negative_ratio},
             {"eval_split", c.eval_split}};
  return json{{"model", model}, {"loss", loss}, {"noise", noise}, {"optim", optim}, {"train", train}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  ObjectReader root(j, "");
  {
    ObjectReader m = root.child("model");
    read_dims(m, c.dims);
    m.get("K", c.K);
    std::string mode = to_string(c.query_mode);
    m.get("query_mode", mode);
    c.query_mode = query_mode_from_string(mode);
    m.finish();
  }
  {
    ObjectReader l = root.child("loss");
    read_terms(l.child("mr"), c.loss.mr);
    read_terms(l.child("hd"), c.loss.hd);
    read_terms(l.child("dn"), c.loss.dn);
    l.get("hd_pos_weight", c.loss.hd_pos_weight);
    l.get("lambda1", c.loss.lambda1);
    l.get("lambda2", c.loss.lambda2);
    l.get("margin", c.loss.margin);
    l.get("temperature", c.loss.temperature);
    l.get("rank_count", c.loss.rank_count);
    l.get("rank_strict", c.loss.rank_strict);
    l.get("aux_layers", c.loss.aux_layers);
    l.finish();
  }
  {
    ObjectReader n = root.child("noise");
    n.get("enabled", c.noise.enabled);
    n.get("delta2", c.noise.delta2);
    n.get("pos_replicas", c.noise.pos_replicas);
    n.get("neg_replicas", c.noise.neg_replicas);
    n.finish();
  }
  {
    ObjectReader o = root.child("optim");
    o.get("lr", c.optim.lr);
    o.get("weight_decay", c.optim.weight_decay);
    o.get("clip_norm", c.optim.clip_norm);
    o.get("beta1", c.optim.beta1);
    o.get("beta2", c.optim.beta2);
    o.get("eps", c.optim.eps);
    o.finish();
  }
  {
    ObjectReader t = root.child("train");
    t.get("batch_size", c.batch_size);
    t.get("epochs", c.epochs);
    t.get("eval_interval", c.eval_interval);
    t.get("seed", c.seed);
    t.get("aux_ratio", c.aux_ratio);
    std::string neg = negatives_name(c.negatives);
    t.get("negatives", neg);
    c.negatives = negatives_from(neg);
    t.get("hard_negative_ratio", c.hard_negative_ratio);
    t.get("eval_split", c.eval_split);
    t.finish();
  }
  root.finish();
  c.validate();
  return c;
}

json to_json(const GenerationConfig& c) {
  return json{{"num_videos", c.num_videos},
              {"val_videos", c.val_videos},
              {"clips_per_video", c.clips_per_video},
              {"segments_per_video", c.segments_per_video},
              {"d_m", c.d_m},
              {"d_s", c.d_s},
              {"d_t", c.d_t},
              {"feature_noise_sigma", c.feature_noise_sigma},
              {"aux_pairs_per_video", c.aux_pairs_per_video},
              {"rewrite_pos_per_dimension", c.rewrite_pos_per_dimension},
              {"rewrite_neg_per_dimension", c.rewrite_neg_per_dimension},
              {"n_scenes", c.n_scenes},
              {"n_actions", c.n_actions},
              {"text_tokens", c.text_tokens},
              {"clip_len_s", c.clip_len_s},
              {"seed", c.seed}};
}

GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig c;
  ObjectReader r(j, "");
  r.get("num_videos", c.num_videos);
  r.get("val_videos", c.val_videos);
  r.get("clips_per_video", c.clips_per_video);
  r.get("segments_per_video", c.segments_per_video);
  r.get("d_m", c.d_m);
  r.get("d_s", c.d_s);
  r.get("d_t", c.d_t);
  r.get("feature_noise_sigma", c.feature_noise_sigma);
  r.get("aux_pairs_per_video", c.aux_pairs_per_video);
  r.get("rewrite_pos_per_dimension", c.rewrite_pos_per_dimension);
  r.get("rewrite_neg_per_dimension", c.rewrite_neg_per_dimension);
  r.get("n_scenes", c.n_scenes);
  r.get("n_actions", c.n_actions);
  r.get("text_tokens", c.text_tokens);
  r.get("clip_len_s", c.clip_len_s);
  r.get("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

json to_json(const ModelConfig& c) {
  json j = dims_json(c.dims);
  j["K"] = c.K;
  j["query_mode"] = to_string(c.query_mode);
  j["d_m"] = c.inputs.d_m;
  j["d_s"] = c.inputs.d_s;
  j["d_t"] = c.inputs.d_t;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  ObjectReader r(j, "");
  read_dims(r, c.dims);
  r.get("K", c.K);
  std::string mode = to_string(c.query_mode);
  r.get("query_mode", mode);
  c.query_mode = query_mode_from_string(mode);
  r.get("d_m", c.inputs.d_m);
  r.get("d_s", c.inputs.d_s);
  r.get("d_t", c.inputs.d_t);
  r.finish();
  c.validate();
  return c;
}

json read_json_file(const fs::path& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IOError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IOError("write failed: " + path.string());
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (std::string o : overrides) {
    const std::string original = o;
    while (!o.empty() && o.front() == '-') o.erase(o.begin());
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like --key.path=value: " + original);
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) {
      if (part.empty()) throw ConfigError("empty segment in override key: " + original);
      parts.push_back(part);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->is_object()) throw ConfigError("override path is not an object: " + original);
      node = &(*node)[parts[i]];
      if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override path is not an object: " + original);
    (*node)[parts.back()] = value;
  }
}

}  // namespace msdetr
