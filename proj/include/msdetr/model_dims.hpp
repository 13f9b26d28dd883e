#pragma once

#include "msdetr/params.hpp"

namespace msdetr {

struct ModelDims {
  int d = 32;
  int heads = 4;
  int tower_layers = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int L_max = 75;
  int ffn_mult = 2;
  double dropout = 0.1;

  /// d divisible by heads and by 4 (the span encoding splits d into four
  /// quarter blocks); all counts positive.
  void validate() const;
};

struct InputDims {
  int d_m = 32;
  int d_s = 32;
  int d_t = 32;
};

/// Per-forward execution settings. Dropout needs `rng` when rate > 0.
struct RunContext {
  double dropout = 0.0;
  Rng* rng = nullptr;
};

}  // namespace msdetr
