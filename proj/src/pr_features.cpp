#include "selfpose/pr_features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace selfpose {

Eigen::VectorXd relational_feature(const Skeleton& s, FeatureOptions opts) {
  Eigen::VectorXd f = relational_feature(s.keypoints());
  if (opts.normalize_scale) {
    const double torso = s.torso_length();
    if (torso > 1e-9) f.head(kNumJointPairs) /= torso;
  }
  return f;
}

double GrayRaster::clamped(int x, int y) const {
  x = std::clamp(x, 0, width() - 1);
  y = std::clamp(y, 0, height() - 1);
  return pixels_(y, x);
}

double GrayRaster::sample(double x, double y) const {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  const double top = (1 - ax) * clamped(x0, y0) + ax * clamped(x0 + 1, y0);
  const double bottom = (1 - ax) * clamped(x0, y0 + 1) + ax * clamped(x0 + 1, y0 + 1);
  return (1 - ay) * top + ay * bottom;
}

void HogConfig::validate() const {
  if (cell <= 0 || block <= 0 || bins <= 0 || window_w <= 0 || window_h <= 0) {
    throw std::invalid_argument("HOG parameters must be positive");
  }
  if (window_w % cell != 0 || window_h % cell != 0) {
    throw std::invalid_argument("HOG window not divisible by cell size");
  }
  if (block > cells_x() || block > cells_y()) {
    throw std::invalid_argument("HOG block larger than window");
  }
}

Eigen::VectorXd hog_descriptor(const GrayRaster& image, const Eigen::Vector2d& center,
                               const HogConfig& cfg) {
  cfg.validate();
  if (cfg.window_w > image.width() || cfg.window_h > image.height()) {
    throw std::invalid_argument("window exceeds image");
  }
  const int x0 = std::clamp(static_cast<int>(std::lround(center.x() - 0.5 * cfg.window_w)), 0,
                            image.width() - cfg.window_w);
  const int y0 = std::clamp(static_cast<int>(std::lround(center.y() - 0.5 * cfg.window_h)), 0,
                            image.height() - cfg.window_h);

  const double range = cfg.signed_orientation ? 2.0 * std::numbers::pi : std::numbers::pi;
  const double bin_width = range / cfg.bins;

  const int cx = cfg.cells_x(), cy = cfg.cells_y();
  // cell histograms, indexed [(cell_y * cx + cell_x) * bins + bin]
  Eigen::VectorXd cells = Eigen::VectorXd::Zero(Eigen::Index(cx) * cy * cfg.bins);

  for (int wy = 0; wy < cfg.window_h; ++wy) {
    for (int wx = 0; wx < cfg.window_w; ++wx) {
      const int x = x0 + wx, y = y0 + wy;
      const double gx = image.clamped(x + 1, y) - image.clamped(x - 1, y);
      const double gy = image.clamped(x, y + 1) - image.clamped(x, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += 2.0 * std::numbers::pi;
      if (!cfg.signed_orientation && theta >= std::numbers::pi) theta -= std::numbers::pi;

      const double pos = theta / bin_width;
      const double lo = std::floor(pos);
      const double frac = pos - lo;
      const int b0 = static_cast<int>(lo) % cfg.bins;
      const int b1 = (b0 + 1) % cfg.bins;
      const Eigen::Index base = (Eigen::Index(wy / cfg.cell) * cx + wx / cfg.cell) * cfg.bins;
      cells(base + b0) += mag * (1.0 - frac);
      cells(base + b1) += mag * frac;
    }
  }

  Eigen::VectorXd out(cfg.descriptor_size());
  const Eigen::Index block_len = Eigen::Index(cfg.block) * cfg.block * cfg.bins;
  Eigen::Index o = 0;
  for (int by = 0; by < cfg.blocks_y(); ++by) {
    for (int bx = 0; bx < cfg.blocks_x(); ++bx) {
      auto blk = out.segment(o, block_len);
      Eigen::Index k = 0;
      for (int dy = 0; dy < cfg.block; ++dy) {
        for (int dx = 0; dx < cfg.block; ++dx) {
          const Eigen::Index c = (Eigen::Index(by + dy) * cx + (bx + dx)) * cfg.bins;
          blk.segment(k, cfg.bins) = cells.segment(c, cfg.bins);
          k += cfg.bins;
        }
      }
      const double norm = blk.norm();
      if (norm > 1e-12) blk /= norm;
      else blk.setZero();
      o += block_len;
    }
  }
  return out;
}

Eigen::VectorXd PrFeature::combined() const {
  if (!appearance) return config;
  Eigen::VectorXd out(combined_dim());
  out << config, *appearance;
  return out;
}

std::array<PartWindow, kNumPartWindows> part_windows(const Skeleton& s) {
  std::array<PartWindow, kNumPartWindows> out;
  const auto side_for = [](double len) { return std::clamp(1.5 * len, 16.0, 96.0); };
  for (int l = 0; l < kNumLimbs; ++l) {
    out[l] = {s.limb_midpoint(kLimbs[l]), side_for(s.limb_length(kLimbs[l]))};
  }
  // kLimbs[0] is head-neck
  out[kNumLimbs] = {s[JointId::Head], side_for(s.limb_length(kLimbs[0]))};
  return out;
}

namespace {

// Resamples the square window onto a cfg-sized grid, then describes it.
Eigen::VectorXd part_descriptor(const GrayRaster& image, const PartWindow& w,
                                const HogConfig& cfg) {
  if (w.side > image.width() || w.side > image.height()) {
    throw std::invalid_argument("window exceeds image");
  }
  const double half = 0.5 * w.side;
  const double left = std::clamp(w.center.x() - half, 0.0, image.width() - w.side);
  const double top = std::clamp(w.center.y() - half, 0.0, image.height() - w.side);

  GrayRaster patch(cfg.window_w, cfg.window_h);
  const double sx = w.side / cfg.window_w, sy = w.side / cfg.window_h;
  for (int y = 0; y < cfg.window_h; ++y) {
    for (int x = 0; x < cfg.window_w; ++x) {
      patch.at(x, y) = image.sample(left + (x + 0.5) * sx - 0.5, top + (y + 0.5) * sy - 0.5);
    }
  }
  const Eigen::Vector2d center(0.5 * cfg.window_w, 0.5 * cfg.window_h);
  return hog_descriptor(patch, center, cfg);
}

}  // namespace

PrFeature pr_feature(const Skeleton& s, const GrayRaster* image, const HogConfig* cfg,
                     FeatureOptions opts) {
  PrFeature f;
  f.config = relational_feature(s, opts);
  if (image != nullptr) {
    if (cfg == nullptr) throw std::invalid_argument("appearance requested without a HOG config");
    cfg->validate();
    const Eigen::Index len = cfg->descriptor_size();
    Eigen::VectorXd app(len * kNumPartWindows);
    const auto windows = part_windows(s);
    for (int p = 0; p < kNumPartWindows; ++p) {
      app.segment(p * len, len) = part_descriptor(*image, windows[p], *cfg);
    }
    f.appearance = std::move(app);
  }
  return f;
}

}  // namespace selfpose
