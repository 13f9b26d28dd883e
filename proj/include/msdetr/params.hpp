#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace msdetr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

struct ParamId {
  int index = -1;
  bool valid() const { return index >= 0; }
};

/// Named, insertion-ordered collection of trainable matrices. Names are
/// dotted paths ("encoder.tmct.0.attn.q.weight") so checkpoints diff cleanly.
class ParamStore {
 public:
  ParamId add(std::string name, Mat init);

  const Mat& value(ParamId id) const { return values_.at(id.index); }
  Mat& value(ParamId id) { return values_.at(id.index); }
  const Mat& value(int index) const { return values_.at(index); }
  Mat& value(int index) { return values_.at(index); }
  const std::string& name(int index) const { return names_.at(index); }

  std::size_t size() const { return values_.size(); }
  std::size_t scalar_count() const;
  std::optional<ParamId> find(std::string_view name) const;

  /// Zero-valued gradient buffers shaped like every parameter.
  std::vector<Mat> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::unordered_map<std::string, int> index_;
};

using GradStore = std::vector<Mat>;

/// Glorot-uniform initialiser for a fan_in x fan_out weight.
Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

}  // namespace msdetr
