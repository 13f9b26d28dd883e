#include "msdetr/dataset.hpp"

#include "msdetr/errors.hpp"

namespace msdetr {

namespace fs = std::filesystem;

std::vector<int> Dataset::positives() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (examples[i].positive()) out.push_back(static_cast<int>(i));
  return out;
}

const Example* Dataset::find(const std::string& qid) const {
  for (const auto& e : examples)
    if (e.qid == qid) return &e;
  return nullptr;
}

Example make_example(const VideoRecord& video, const AnnotationRecord& annotation) {
  Example e;
  e.qid = annotation.qid;
  e.vid = annotation.vid;
  e.motion = video.motion.to_eigen();
  e.semantic = video.semantic.to_eigen();
  e.text = annotation.text.to_eigen();
  e.windows = annotation.windows;
  e.labels = annotation.saliency_labels;
  e.polarity = annotation.polarity;
  e.duration_s = video.duration_s;
  return e;
}

Dataset load_split(const fs::path& manifest) {
  const Manifest m = load_manifest(manifest);
  ensure_valid(validate_dataset(m.annotations, m.videos));
  Dataset d;
  for (const auto& a : m.annotations) d.examples.push_back(make_example(*m.find_video(a.vid), a));
  return d;
}

Dataset dataset_from_samples(const std::vector<SyntheticSample>& samples) {
  Dataset d;
  for (const auto& s : samples) d.examples.push_back(make_example(s.video, s.annotation));
  return d;
}

const Dataset& DataDir::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "aux") return aux;
  throw InputError("unknown split '" + name + "' (expected train, val or aux)");
}

DataDir load_data_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IOError("data directory not found: " + dir.string());
  if (!fs::exists(dir / "train.jsonl")) throw IOError("missing " + (dir / "train.jsonl").string());
  DataDir out;
  out.root = dir;
  out.train = load_split(dir / "train.jsonl");
  if (fs::exists(dir / "val.jsonl")) out.val = load_split(dir / "val.jsonl");
  if (fs::exists(dir / "aux.jsonl")) out.aux = load_split(dir / "aux.jsonl");
  return out;
}

}  // namespace msdetr
