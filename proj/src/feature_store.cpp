#include "msdetr/feature_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "msdetr/errors.hpp"

namespace msdetr {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "MSDF I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'S', 'D', 'F'};
constexpr std::uint32_t kVersionF32 = 1;
constexpr std::uint32_t kVersionF64 = 2;
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

struct Header {
  std::uint32_t version, rows, cols;
};

Header parse_header(const std::vector<char>& bytes, const fs::path& path) {
  if (bytes.size() < kHeaderBytes) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
    throw FormatError(path.string() + ": bad magic");
  Header h{get_u32(bytes.data() + 4), get_u32(bytes.data() + 8), get_u32(bytes.data() + 12)};
  if (h.version != kVersionF32 && h.version != kVersionF64)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(h.version));
  const std::size_t elem = h.version == kVersionF32 ? 4 : 8;
  const std::size_t want = kHeaderBytes + std::size_t(h.rows) * h.cols * elem;
  if (bytes.size() < want) throw FormatError(path.string() + ": truncated payload");
  if (bytes.size() > want) throw FormatError(path.string() + ": trailing bytes after payload");
  return h;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + path.string());
  return out;
}

}  // namespace

// ---- FeatureMatrix ------------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::uint32_t r, std::uint32_t c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {}

Mat FeatureMatrix::to_eigen() const {
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = at(r, c);
  return m;
}

FeatureMatrix FeatureMatrix::from_eigen(const Mat& m) {
  FeatureMatrix f(static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()), {});
  f.data.resize(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      f.data[std::size_t(r) * f.cols + std::size_t(c)] = static_cast<float>(m(r, c));
  return f;
}

void FeatureMatrix::validate() const {
  if (rows == 0 || cols == 0) throw DataError("feature matrix must have rows >= 1 and cols >= 1");
  if (data.size() != std::size_t(rows) * cols) throw DataError("feature matrix payload size mismatch");
  for (float v : data)
    if (!std::isfinite(v)) throw DataError("feature matrix has a non-finite entry");
}

bool FeatureMatrix::operator==(const FeatureMatrix& other) const {
  return rows == other.rows && cols == other.cols && data.size() == other.data.size() &&
         std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

// ---- MomentSpan -----------------------------------------------------------------

MomentSpan MomentSpan::from_start_end(double start, double end) {
  return MomentSpan{(start + end) / 2.0, end - start};
}

void MomentSpan::validate() const {
  if (!std::isfinite(center) || !std::isfinite(span)) throw ValidationError("span is not finite");
  if (span <= 0.0 || span > 1.0 + kSpanTolerance)
    throw ValidationError("span width out of (0, 1]: " + std::to_string(span));
  if (start() < -kSpanTolerance || end() > 1.0 + kSpanTolerance)
    throw ValidationError("span leaves [0, 1]: [" + std::to_string(start()) + ", " +
                          std::to_string(end()) + "]");
}

MomentSpan MomentSpan::clamped() const {
  validate();
  const double s = std::max(0.0, start());
  const double e = std::min(1.0, end());
  return from_start_end(s, e);
}

// ---- MSDF -----------------------------------------------------------------------

void write_feature_file(const fs::path& path, const FeatureMatrix& m) {
  m.validate();
  auto out = open_out(path);
  out.write(kMagic.data(), 4);
  put_u32(out, kVersionF32);
  put_u32(out, m.rows);
  put_u32(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!out) throw IOError("write failed: " + path.string());
}

FeatureMatrix read_feature_file(const fs::path& path) {
  const auto bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  if (h.version != kVersionF32) throw FormatError(path.string() + ": expected an f32 feature file");
  FeatureMatrix m(h.rows, h.cols, std::vector<float>(std::size_t(h.rows) * h.cols));
  std::memcpy(m.data.data(), bytes.data() + kHeaderBytes, m.data.size() * sizeof(float));
  if (h.rows == 0 || h.cols == 0) throw FormatError(path.string() + ": empty matrix");
  for (float v : m.data)
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite entry");
  return m;
}

void write_matrix_file(const fs::path& path, const Mat& m) {
  auto out = open_out(path);
  out.write(kMagic.data(), 4);
  put_u32(out, kVersionF64);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!out) throw IOError("write failed: " + path.string());
}

Mat read_matrix_file(const fs::path& path) {
  const auto bytes = slurp(path);
  const Header h = parse_header(bytes, path);
  Mat m(h.rows, h.cols);
  const char* p = bytes.data() + kHeaderBytes;
  for (std::uint32_t r = 0; r < h.rows; ++r)
    for (std::uint32_t c = 0; c < h.cols; ++c) {
      if (h.version == kVersionF32) {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        m(r, c) = v;
      } else {
        double v;
        std::memcpy(&v, p, 8);
        p += 8;
        m(r, c) = v;
      }
      if (!std::isfinite(m(r, c))) throw DataError(path.string() + ": non-finite entry");
    }
  return m;
}

// ---- manifests ------------------------------------------------------------------

const VideoRecord* Manifest::find_video(const std::string& vid) const {
  for (const auto& v : videos)
    if (v.vid == vid) return &v;
  return nullptr;
}

ManifestLine parse_manifest_line(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest line is not JSON: ") + e.what());
  }
  ManifestLine l;
  try {
    l.qid = j.at("qid").get<std::string>();
    l.vid = j.at("vid").get<std::string>();
    l.duration = j.at("duration").get<double>();
    for (const auto& w : j.at("relevant_windows")) {
      if (!w.is_array() || w.size() != 2) throw FormatError("relevant_windows entries must be [start, end]");
      l.relevant_windows.emplace_back(w[0].get<double>(), w[1].get<double>());
    }
    l.saliency_scores = j.at("saliency_scores").get<std::vector<int>>();
    l.motion_path = j.at("motion_path").get<std::string>();
    l.semantic_path = j.at("semantic_path").get<std::string>();
    l.text_path = j.at("text_path").get<std::string>();
    const std::string pol = j.value("polarity", std::string("pos"));
    if (pol == "pos") {
      l.polarity = Polarity::positive;
    } else if (pol == "neg") {
      l.polarity = Polarity::hard_negative;
    } else {
      throw FormatError("polarity must be \"pos\" or \"neg\", got \"" + pol + "\"");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest line schema: ") + e.what());
  }
  return l;
}

std::string format_manifest_line(const ManifestLine& l) {
  json w = json::array();
  for (const auto& [s, e] : l.relevant_windows) w.push_back({s, e});
  json j = {{"qid", l.qid},
            {"vid", l.vid},
            {"duration", l.duration},
            {"relevant_windows", w},
            {"saliency_scores", l.saliency_scores},
            {"motion_path", l.motion_path},
            {"semantic_path", l.semantic_path},
            {"text_path", l.text_path},
            {"polarity", l.polarity == Polarity::positive ? "pos" : "neg"}};
  return j.dump();
}

MomentSpan window_to_span(double start_s, double end_s, double duration_s) {
  if (!(duration_s > 0.0)) throw ValidationError("duration must be positive");
  if (!(end_s > start_s))
    throw ValidationError("window end must exceed start: [" + std::to_string(start_s) + ", " +
                          std::to_string(end_s) + "]");
  const double s = start_s / duration_s;
  const double e = end_s / duration_s;
  if (s < -kSpanTolerance || e > 1.0 + kSpanTolerance)
    throw ValidationError("window [" + std::to_string(start_s) + ", " + std::to_string(end_s) +
                          "] exceeds duration " + std::to_string(duration_s));
  return MomentSpan::from_start_end(std::max(0.0, s), std::min(1.0, e));
}

std::pair<double, double> span_to_window(const MomentSpan& m, double duration_s) {
  return {m.start() * duration_s, m.end() * duration_s};
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest out;
  std::unordered_map<std::string, std::size_t> video_index;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no) + ": ";
    ManifestLine l;
    try {
      l = parse_manifest_line(text);
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }

    auto resolve = [&](const std::string& p) {
      fs::path fp = fs::path(p).is_absolute() ? fs::path(p) : base / p;
      if (!fs::exists(fp)) throw IOError(where + "missing feature file " + fp.string());
      return fp;
    };

    if (!video_index.count(l.vid)) {
      VideoRecord v;
      v.vid = l.vid;
      v.motion = read_feature_file(resolve(l.motion_path));
      v.semantic = read_feature_file(resolve(l.semantic_path));
      v.duration_s = l.duration;
      v.clip_len_s = l.duration / static_cast<double>(v.motion.rows);
      video_index.emplace(l.vid, out.videos.size());
      out.videos.push_back(std::move(v));
    }

    AnnotationRecord a;
    a.qid = l.qid;
    a.vid = l.vid;
    a.text = read_feature_file(resolve(l.text_path));
    a.polarity = l.polarity;
    a.saliency_labels = l.saliency_scores;
    if (a.polarity == Polarity::positive && l.relevant_windows.empty())
      throw ValidationError(where + "positive query " + l.qid + " has no relevant_windows");
    try {
      for (const auto& [s, e] : l.relevant_windows) a.windows.push_back(window_to_span(s, e, l.duration));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    out.annotations.push_back(std::move(a));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestLine>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IOError("cannot write manifest " + path.string());
  for (const auto& l : lines) out << format_manifest_line(l) << '\n';
  if (!out) throw IOError("write failed: " + path.string());
}

// ---- validation -----------------------------------------------------------------

DatasetReport validate_dataset(const std::vector<AnnotationRecord>& annotations,
                               const std::vector<VideoRecord>& videos) {
  DatasetReport rep;
  std::unordered_map<std::string, const VideoRecord*> by_vid;
  for (const auto& v : videos) {
    if (by_vid.count(v.vid)) rep.errors.push_back("duplicate vid " + v.vid);
    by_vid[v.vid] = &v;
    try {
      v.motion.validate();
      v.semantic.validate();
    } catch (const ValidationError& e) {
      rep.errors.push_back("video " + v.vid + ": " + e.what());
      continue;
    }
    if (v.motion.rows != v.semantic.rows)
      rep.errors.push_back("video " + v.vid + ": motion/semantic clip counts differ");
    if (std::abs(v.num_clips() * v.clip_len_s - v.duration_s) > v.clip_len_s + 1e-9)
      rep.errors.push_back("video " + v.vid + ": clip count inconsistent with duration");
  }
  rep.videos = by_vid.size();

  std::set<std::string> seen;
  for (const auto& a : annotations) {
    ++rep.queries;
    if (a.polarity == Polarity::positive) ++rep.positives; else ++rep.negatives;
    const std::string who = "query " + a.qid + ": ";
    if (!seen.insert(a.qid).second) rep.errors.push_back(who + "duplicate qid");
    auto it = by_vid.find(a.vid);
    if (it == by_vid.end()) {
      rep.errors.push_back(who + "unknown vid " + a.vid);
      continue;
    }
    const int L = it->second->num_clips();
    try {
      a.text.validate();
    } catch (const ValidationError& e) {
      rep.errors.push_back(who + "text: " + e.what());
    }
    if (a.polarity == Polarity::positive && a.windows.empty())
      rep.errors.push_back(who + "positive query without windows");
    for (const auto& w : a.windows) {
      try {
        w.validate();
      } catch (const ValidationError& e) {
        rep.errors.push_back(who + e.what());
      }
    }
    if (static_cast<int>(a.saliency_labels.size()) != L) {
      rep.errors.push_back(who + "saliency label count " + std::to_string(a.saliency_labels.size()) +
                           " != clip count " + std::to_string(L));
    } else {
      for (int lab : a.saliency_labels) {
        if (lab < -1 || lab > 4) {
          rep.errors.push_back(who + "saliency label out of range: " + std::to_string(lab));
          break;
        }
      }
    }
  }
  return rep;
}

void ensure_valid(const DatasetReport& report) {
  if (!report.errors.empty()) throw ValidationError(report.errors);
}

}  // namespace msdetr
