#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msdetr/params.hpp"

namespace msdetr {

/// Dense row-major matrix of clip- or word-level embeddings as stored on disk.
/// Entries are kept in single precision so that file round trips are exact.
struct FeatureMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::uint32_t r, std::uint32_t c, std::vector<float> values);

  float at(std::uint32_t r, std::uint32_t c) const { return data[std::size_t(r) * cols + c]; }
  Mat to_eigen() const;
  static FeatureMatrix from_eigen(const Mat& m);

  /// Throws DataError when rows/cols are zero, the payload size disagrees,
  /// or an entry is not finite.
  void validate() const;

  bool operator==(const FeatureMatrix& other) const;
};

/// Normalised temporal segment (center, span) on [0, 1].
struct MomentSpan {
  double center = 0.5;
  double span = 1.0;

  double start() const { return center - span / 2.0; }
  double end() const { return center + span / 2.0; }

  static MomentSpan from_start_end(double start, double end);
  /// Throws ValidationError if the span breaks the [0, 1] bounds by more than
  /// the 1e-6 tolerance or has non-positive width.
  void validate() const;
  /// Snaps endpoints that lie within tolerance of the unit interval back inside.
  MomentSpan clamped() const;
};

inline constexpr double kSpanTolerance = 1e-6;

struct VideoRecord {
  std::string vid;
  FeatureMatrix motion;
  FeatureMatrix semantic;
  double duration_s = 0.0;
  double clip_len_s = 0.0;

  int num_clips() const { return static_cast<int>(motion.rows); }
};

enum class Polarity { positive, hard_negative };

struct AnnotationRecord {
  std::string qid;
  std::string vid;
  FeatureMatrix text;
  std::vector<MomentSpan> windows;
  /// One label per clip: 0..4 inside ground-truth windows, -1 elsewhere.
  std::vector<int> saliency_labels;
  Polarity polarity = Polarity::positive;
};

// ---- MSDF binary matrices ---------------------------------------------------

/// Writes magic "MSDF", u32 version 1, u32 rows, u32 cols, then rows*cols
/// little-endian f32 values in row-major order.
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

/// Double-precision variant (version 2, f64 payload) used for checkpoints.
void write_matrix_file(const std::filesystem::path& path, const Mat& m);
/// Reads version 1 or version 2 files into a double matrix.
Mat read_matrix_file(const std::filesystem::path& path);

// ---- manifests ------------------------------------------------------------------

/// One JSON line of a manifest, with windows in seconds and feature paths
/// relative to the manifest's directory.
struct ManifestLine {
  std::string qid;
  std::string vid;
  double duration = 0.0;
  std::vector<std::pair<double, double>> relevant_windows;
  std::vector<int> saliency_scores;
  std::string motion_path;
  std::string semantic_path;
  std::string text_path;
  Polarity polarity = Polarity::positive;
};

struct Manifest {
  std::vector<AnnotationRecord> annotations;
  std::vector<VideoRecord> videos;  // unique by vid, in first-seen order

  const VideoRecord* find_video(const std::string& vid) const;
};

ManifestLine parse_manifest_line(const std::string& json_text);
std::string format_manifest_line(const ManifestLine& line);

/// Seconds -> normalised span; throws ValidationError for windows outside
/// [0, duration] or with end <= start.
MomentSpan window_to_span(double start_s, double end_s, double duration_s);
std::pair<double, double> span_to_window(const MomentSpan& m, double duration_s);

Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestLine>& lines);

struct DatasetReport {
  std::size_t videos = 0;
  std::size_t queries = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<std::string> errors;
};

/// Checks every record invariant and qid uniqueness; breaches are collected
/// in `errors` rather than thrown.
DatasetReport validate_dataset(const std::vector<AnnotationRecord>& annotations,
                               const std::vector<VideoRecord>& videos);
/// Throws ValidationError carrying every issue if the report has errors.
void ensure_valid(const DatasetReport& report);

}  // namespace msdetr
