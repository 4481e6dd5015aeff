#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "selfpose/core.hpp"

namespace selfpose {

// Per-joint likelihood grid. Cell (col, row) maps to pixel
// origin + stride * (col, row).
struct Heatmap {
  JointId joint = JointId::Head;
  Eigen::ArrayXXd grid;  // rows = height, cols = width, values in [0,1]
  double stride = 1.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();

  int width() const { return static_cast<int>(grid.cols()); }
  int height() const { return static_cast<int>(grid.rows()); }
  Eigen::Vector2d to_pixels(double col, double row) const {
    return origin + stride * Eigen::Vector2d(col, row);
  }
  bool valid() const;
};

struct CandidateGenConfig {
  double threshold = 0.1;
  int top_k = 3;
  int beam = 500;
  double nms_radius = 2.0;  // cells

  void validate() const;
};

struct Peak {
  double x = 0.0;  // pixels
  double y = 0.0;
  double value = 0.0;
};

// Strict 8-neighbourhood maxima at or above the threshold, greedily
// suppressed within nms_radius cells, strongest top_k kept, refined by a
// 1-D quadratic fit per axis. Sorted by value, descending.
std::vector<Peak> local_maxima(const Heatmap& h, const CandidateGenConfig& cfg);

struct Assembly {
  std::vector<int> picks;  // one peak index per joint
  double score = 0.0;
};

// Beam search over joints in order; partial assemblies ranked by summed peak
// value (ties: lexicographically smaller picks first), at most `beam` kept
// per step. Exact top-`beam` of the full product for additive scores.
std::vector<Assembly> beam_assemble(const std::vector<std::vector<Peak>>& peaks, int beam);

// One heatmap per joint (any order). Empty if some joint has no maximum.
// Throws DataError if a joint map is missing or duplicated.
std::vector<CandidatePose> enumerate_candidates(std::span<const Heatmap> maps,
                                                const CandidateGenConfig& cfg,
                                                const std::string& image_id = {}, int stage = 1);

// Concatenates per-stage lists; candidates of the same image whose joints all
// lie within `tolerance` px of a higher-scoring one are dropped.
std::vector<CandidatePose> merge_stage_candidates(
    const std::vector<std::vector<CandidatePose>>& per_stage, double tolerance = 1.0);

// Flat binary heatmaps: per map a header (magic "SPHM", u32 joint, u32 width,
// u32 height, f64 stride, f64 origin x, f64 origin y) then width*height
// row-major f32 values, all little-endian. A file holds any number of maps.
std::string serialize_heatmaps(std::span<const Heatmap> maps);
std::vector<Heatmap> deserialize_heatmaps(const std::string& bytes);
void write_heatmaps(const std::string& path, std::span<const Heatmap> maps);
std::vector<Heatmap> read_heatmaps(const std::string& path);

}  // namespace selfpose
