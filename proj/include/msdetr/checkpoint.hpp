#pragma once

#include <filesystem>
#include <memory>

#include "msdetr/config.hpp"
#include "msdetr/model.hpp"

namespace msdetr {

/// Directory layout: params/<name>.msdf (f64 MSDF), index.json (name ->
/// shape), model.json, train_config.json and meta.json.
void save_checkpoint(const std::filesystem::path& dir, const MsDetr& model, const TrainConfig& train_cfg,
                     const json& meta);

struct LoadedCheckpoint {
  std::unique_ptr<MsDetr> model;
  TrainConfig train_config;
  json meta;
};

/// Throws IOError for a missing directory or parameter file and FormatError
/// when the index disagrees with the model layout.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace msdetr
