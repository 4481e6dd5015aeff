#include "selfpose/candidates.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "binary.hpp"
#include "selfpose/io.hpp"

namespace selfpose {

bool Heatmap::valid() const {
  return grid.size() > 0 && grid.allFinite() && grid.minCoeff() >= 0.0 && grid.maxCoeff() <= 1.0 &&
         stride > 0.0;
}

void CandidateGenConfig::validate() const {
  if (top_k < 1 || beam < 1) throw std::invalid_argument("top_k and beam must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold must lie in [0,1]");
  if (!(nms_radius >= 0.0)) throw std::invalid_argument("nms_radius must be non-negative");
}

namespace {

// Vertex offset of the parabola through (-1, l), (0, c), (1, r).
double quadratic_offset(double l, double c, double r) {
  const double denom = l - 2.0 * c + r;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);
}

}  // namespace

std::vector<Peak> local_maxima(const Heatmap& h, const CandidateGenConfig& cfg) {
  cfg.validate();
  struct Cell {
    int col, row;
    double value;
  };
  std::vector<Cell> cells;
  const int W = h.width(), H = h.height();
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double v = h.grid(r, c);
      if (!(v >= cfg.threshold)) continue;
      bool strict = true;
      for (int dr = -1; dr <= 1 && strict; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
          if (!(v > h.grid(rr, cc))) {
            strict = false;
            break;
          }
        }
      }
      if (strict) cells.push_back({c, r, v});
    }
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.value > b.value; });

  std::vector<Cell> kept;
  const double r2 = cfg.nms_radius * cfg.nms_radius;
  for (const Cell& cell : cells) {
    if (int(kept.size()) >= cfg.top_k) break;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Cell& k) {
      const double dc = k.col - cell.col, dr = k.row - cell.row;
      return dc * dc + dr * dr <= r2;
    });
    if (!suppressed) kept.push_back(cell);
  }

  std::vector<Peak> out;
  out.reserve(kept.size());
  for (const Cell& cell : kept) {
    double oc = 0.0, orow = 0.0;
    if (cell.col > 0 && cell.col + 1 < W) {
      oc = quadratic_offset(h.grid(cell.row, cell.col - 1), cell.value, h.grid(cell.row, cell.col + 1));
    }
    if (cell.row > 0 && cell.row + 1 < H) {
      orow = quadratic_offset(h.grid(cell.row - 1, cell.col), cell.value, h.grid(cell.row + 1, cell.col));
    }
    const Eigen::Vector2d p = h.to_pixels(cell.col + oc, cell.row + orow);
    out.push_back({p.x(), p.y(), cell.value});
  }
  return out;
}

std::vector<Assembly> beam_assemble(const std::vector<std::vector<Peak>>& peaks, int beam) {
  if (beam < 1) throw std::invalid_argument("beam must be at least 1");
  std::vector<Assembly> frontier(1);
  for (const auto& joint_peaks : peaks) {
    if (joint_peaks.empty()) return {};
    std::vector<Assembly> next;
    next.reserve(frontier.size() * joint_peaks.size());
    for (const Assembly& partial : frontier) {
      for (int k = 0; k < int(joint_peaks.size()); ++k) {
        Assembly a = partial;
        a.picks.push_back(k);
        a.score += joint_peaks[k].value;
        next.push_back(std::move(a));
      }
    }
    const auto better = [](const Assembly& a, const Assembly& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.picks < b.picks;
    };
    if (int(next.size()) > beam) {
      std::partial_sort(next.begin(), next.begin() + beam, next.end(), better);
      next.resize(beam);
    } else {
      std::sort(next.begin(), next.end(), better);
    }
    frontier = std::move(next);
  }
  return frontier;
}

std::vector<CandidatePose> enumerate_candidates(std::span<const Heatmap> maps,
                                                const CandidateGenConfig& cfg,
                                                const std::string& image_id, int stage) {
  cfg.validate();
  std::array<const Heatmap*, kNumJoints> by_joint{};
  for (const Heatmap& h : maps) {
    const int j = index(h.joint);
    if (j < 0 || j >= kNumJoints) throw DataError("heatmap with invalid joint id");
    if (by_joint[j] != nullptr) {
      throw DataError("duplicate heatmap for joint " + std::string(joint_name(h.joint)));
    }
    by_joint[j] = &h;
  }
  std::vector<std::vector<Peak>> peaks(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    if (by_joint[j] == nullptr) {
      throw DataError("missing heatmap for joint " + std::string(joint_name(static_cast<JointId>(j))));
    }
    peaks[j] = local_maxima(*by_joint[j], cfg);
  }

  std::vector<CandidatePose> out;
  for (const Assembly& a : beam_assemble(peaks, cfg.beam)) {
    CandidatePose c;
    for (int j = 0; j < kNumJoints; ++j) {
      const Peak& p = peaks[j][a.picks[j]];
      c.skeleton.keypoints().col(j) << p.x, p.y;
    }
    c.score = a.score;
    c.image_id = image_id;
    c.stage = stage;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CandidatePose> merge_stage_candidates(
    const std::vector<std::vector<CandidatePose>>& per_stage, double tolerance) {
  std::vector<CandidatePose> all;
  for (const auto& stage : per_stage) all.insert(all.end(), stage.begin(), stage.end());

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all[a].score > all[b].score; });

  std::vector<bool> keep(all.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      if (all[k].image_id != all[i].image_id) return false;
      const auto diff = all[k].skeleton.keypoints() - all[i].skeleton.keypoints();
      return (diff.colwise().norm().array() <= tolerance).all();
    });
    if (!dup) {
      keep[i] = true;
      kept.push_back(i);
    }
  }
  std::vector<CandidatePose> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (keep[i]) out.push_back(std::move(all[i]));
  }
  return out;
}

namespace {

constexpr char kHeatmapMagic[4] = {'S', 'P', 'H', 'M'};

}  // namespace

std::string serialize_heatmaps(std::span<const Heatmap> maps) {
  detail::ByteWriter w;
  for (const Heatmap& h : maps) {
    w.put_bytes(std::string_view(kHeatmapMagic, 4));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(index(h.joint)));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.width()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.height()));
    w.put<double>(h.stride);
    w.put<double>(h.origin.x());
    w.put<double>(h.origin.y());
    for (int r = 0; r < h.height(); ++r) {
      for (int c = 0; c < h.width(); ++c) w.put<float>(static_cast<float>(h.grid(r, c)));
    }
  }
  return w.take();
}

std::vector<Heatmap> deserialize_heatmaps(const std::string& bytes) {
  detail::ByteReader r(bytes);
  std::vector<Heatmap> out;
  while (r.remaining() > 0) {
    if (r.get_bytes(4) != std::string_view(kHeatmapMagic, 4)) throw DataError("bad heatmap magic");
    Heatmap h;
    const auto joint = r.get<std::uint32_t>();
    if (joint >= std::uint32_t(kNumJoints)) throw DataError("heatmap joint id out of range");
    h.joint = static_cast<JointId>(joint);
    const auto w = r.get<std::uint32_t>();
    const auto hh = r.get<std::uint32_t>();
    h.stride = r.get<double>();
    h.origin.x() = r.get<double>();
    h.origin.y() = r.get<double>();
    if (std::uint64_t(w) * hh * sizeof(float) > r.remaining()) throw DataError("truncated heatmap");
    h.grid.resize(hh, w);
    for (std::uint32_t row = 0; row < hh; ++row) {
      for (std::uint32_t col = 0; col < w; ++col) h.grid(row, col) = r.get<float>();
    }
    if (!h.valid()) throw DataError("heatmap values must be finite and lie in [0,1]");
    out.push_back(std::move(h));
  }
  return out;
}

void write_heatmaps(const std::string& path, std::span<const Heatmap> maps) {
  write_file_atomic(path, serialize_heatmaps(maps));
}

std::vector<Heatmap> read_heatmaps(const std::string& path) {
  return deserialize_heatmaps(read_file(path));
}

}  // namespace selfpose
