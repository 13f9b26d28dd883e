#include "msdetr/params.hpp"

#include <cmath>

#include "msdetr/errors.hpp"

namespace msdetr {

ParamId ParamStore::add(std::string name, Mat init) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  const int idx = static_cast<int>(values_.size());
  index_.emplace(name, idx);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return ParamId{idx};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

std::vector<Mat> ParamStore::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(Mat::Zero(v.rows(), v.cols()));
  return out;
}

Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(fan_in, fan_out);
  // Fill row-major so the draw order does not depend on Eigen's storage.
  for (Eigen::Index r = 0; r < fan_in; ++r)
    for (Eigen::Index c = 0; c < fan_out; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace msdetr
