#pragma once

#include "msdetr/config.hpp"
#include "msdetr/dataset.hpp"
#include "msdetr/synthetic_corpus.hpp"

namespace msdetr::testing {

inline DataDir to_data_dir(const GeneratedDataset& g) {
  DataDir d;
  d.train = dataset_from_samples(g.train);
  d.val = dataset_from_samples(g.val);
  d.aux = dataset_from_samples(g.aux);
  return d;
}

inline GenerationConfig tiny_generation(std::uint64_t seed = 0) {
  GenerationConfig c;
  c.num_videos = 6;
  c.val_videos = 3;
  c.clips_per_video = 12;
  c.segments_per_video = 3;
  c.d_m = c.d_s = c.d_t = 16;
  c.n_scenes = c.n_actions = 4;
  c.aux_pairs_per_video = 1;
  c.seed = seed;
  return c;
}

inline TrainConfig tiny_training() {
  TrainConfig t;
  t.dims.d = 16;
  t.dims.heads = 2;
  t.dims.tower_layers = t.dims.encoder_layers = t.dims.decoder_layers = 1;
  t.dims.L_max = 32;
  t.K = 4;
  t.batch_size = 3;
  t.epochs = 2;
  t.eval_interval = 1;
  t.optim.lr = 1e-3;
  return t;
}

}  // namespace msdetr::testing
