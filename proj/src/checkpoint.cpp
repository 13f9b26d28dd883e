#include "msdetr/checkpoint.hpp"

#include "msdetr/errors.hpp"

namespace msdetr {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const MsDetr& model, const TrainConfig& train_cfg, const json& meta) {
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  if (ec) throw IOError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  const ParamStore& p = model.params();
  json index = json::object();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Mat& v = p.value(static_cast<int>(i));
    write_matrix_file(dir / "params" / (p.name(static_cast<int>(i)) + ".msdf"), v);
    index[p.name(static_cast<int>(i))] = json::array({v.rows(), v.cols()});
  }
  write_json_file(dir / "index.json", index);
  write_json_file(dir / "model.json", to_json(model.config()));
  write_json_file(dir / "train_config.json", to_json(train_cfg));
  write_json_file(dir / "meta.json", meta);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IOError("checkpoint directory not found: " + dir.string());
  LoadedCheckpoint out;
  const ModelConfig mc = model_config_from_json(read_json_file(dir / "model.json"));
  out.train_config = train_config_from_json(read_json_file(dir / "train_config.json"));
  out.meta = fs::exists(dir / "meta.json") ? read_json_file(dir / "meta.json") : json::object();
  const json index = read_json_file(dir / "index.json");
  out.model = std::make_unique<MsDetr>(mc, 0);
  ParamStore& p = out.model->params();
  if (index.size() != p.size())
    throw FormatError("checkpoint index lists " + std::to_string(index.size()) + " parameters, model has " +
                      std::to_string(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& name = p.name(static_cast<int>(i));
    Mat& target = p.value(static_cast<int>(i));
    if (!index.contains(name)) throw FormatError("checkpoint index is missing parameter " + name);
    if (index[name] != json::array({target.rows(), target.cols()}))
      throw FormatError("checkpoint index shape of " + name + " disagrees with the model layout");
    const fs::path file = dir / "params" / (name + ".msdf");
    if (!fs::exists(file)) throw IOError("missing parameter file " + file.string());
    Mat v = read_matrix_file(file);
    if (v.rows() != target.rows() || v.cols() != target.cols())
      throw FormatError("parameter " + name + " has shape " + std::to_string(v.rows()) + "x" +
                        std::to_string(v.cols()) + ", expected " + std::to_string(target.rows()) + "x" +
                        std::to_string(target.cols()));
    target = std::move(v);
  }
  return out;
}

}  // namespace msdetr
