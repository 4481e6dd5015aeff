#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfpose/core.hpp"
#include "selfpose/pr_features.hpp"

namespace selfpose {

std::string read_file(const std::string& path);
// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

enum class Provenance { None, Annotation, Svm, Cluster, Detection };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view s);

// One pose per line of JSON:
//   {"image_id":..., "action":..., "keypoints":[[x,y] x14], "score":...,
//    "stage":..., "provenance":...}
// action, score and stage may be absent.
struct PoseRecord {
  std::string image_id;
  std::optional<ActionLabel> action;
  Skeleton skeleton;
  std::optional<double> score;
  std::optional<int> stage;
  Provenance provenance = Provenance::None;

  friend bool operator==(const PoseRecord&, const PoseRecord&) = default;
};

std::string format_pose_record(const PoseRecord& r);
PoseRecord parse_pose_record(const std::string& line);
// Blank lines are skipped; a malformed line throws DataError("line N: ...").
std::vector<PoseRecord> parse_pose_records(const std::string& text);
std::vector<PoseRecord> read_pose_records(const std::string& path);
void write_pose_records(const std::string& path, const std::vector<PoseRecord>& records);

PoseRecord to_record(const CandidatePose& c, Provenance p = Provenance::Detection);
CandidatePose to_candidate(const PoseRecord& r);

// Dataset split as JSON lines tagged with "set": "fs" | "ws" | "us" | "bg".
std::string format_split(const DatasetSplit& split);
DatasetSplit parse_split(const std::string& text);
DatasetSplit read_split(const std::string& path);
void write_split(const std::string& path, const DatasetSplit& split);

// 8-bit binary PGM (P5), intensities scaled to [0,1].
GrayRaster parse_pgm(const std::string& bytes);
GrayRaster read_pgm(const std::string& path);
std::string format_pgm(const GrayRaster& image);

// Flat key=value file; '#' starts a comment line.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;

  // Overwrite `out` when the key is present; throws DataError on a bad value.
  void read(const std::string& key, double& out) const;
  void read(const std::string& key, int& out) const;
  void read(const std::string& key, std::uint64_t& out) const;
  void read(const std::string& key, bool& out) const;
  void read(const std::string& key, std::string& out) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace selfpose
