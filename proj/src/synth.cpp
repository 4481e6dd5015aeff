#include "selfpose/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

namespace selfpose {

void SynthConfig::validate() const {
  const auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (n_actions < 1 || n_actions > kNumActions) throw std::invalid_argument("n_actions must lie in [1, 8]");
  if (poses_per_action < 1) throw std::invalid_argument("poses_per_action must be positive");
  if (!rate(outlier_rate) || !rate(fs_fraction) || !rate(variant_rate)) {
    throw std::invalid_argument("rates must lie in [0, 1]");
  }
  if (!(base_noise >= 0.0) || n_backgrounds < 0 || image_size < 64 || !(stride > 0.0)) {
    throw std::invalid_argument("invalid synthetic corpus geometry");
  }
}

namespace {

// Limb angles in degrees from straight down (positive swings toward +x):
// upper arm, forearm, thigh, shin for the left side then the right side.
struct Stance {
  std::array<double, 4> left;
  std::array<double, 4> right;
};

constexpr std::array<Stance, kNumActions> kStances{{
    {{40, 100, 30, -20}, {-40, -10, -25, -60}},     // athletics
    {{160, 170, 15, 10}, {-30, -20, -15, -10}},     // badminton
    {{70, 120, 25, 0}, {60, 110, -25, 0}},          // baseball
    {{170, 180, 80, 85}, {-170, -180, -80, -85}},   // gymnastics
    {{50, 60, 0, 0}, {-50, -60, -60, -20}},         // soccer
    {{100, 120, 20, 10}, {-20, -40, -20, -5}},      // tennis
    {{150, 140, 10, 30}, {-150, -140, -10, -30}},   // volleyball
    {{10, 5, 5, 0}, {-10, -5, -5, 0}},              // general
}};

// Body proportions in px at unit scale.
constexpr double kHead = 18, kShoulderX = 18, kShoulderY = 4, kUpperArm = 26, kForearm = 24;
constexpr double kHipX = 10, kHipY = 50, kThigh = 36, kShin = 34;

Eigen::Vector2d swing(double deg, double len) {
  const double r = deg * std::numbers::pi / 180.0;
  return {len * std::sin(r), len * std::cos(r)};
}

Stance mirrored(const Stance& s) {
  Stance m;
  for (int i = 0; i < 4; ++i) {
    m.left[i] = -s.right[i];
    m.right[i] = -s.left[i];
  }
  // Mirroring a symmetric stance is a no-op; lift one arm so the variant
  // stays distinct.
  m.left[0] += 60.0;
  m.left[1] += 80.0;
  return m;
}

Skeleton build(const Stance& s) {
  Skeleton sk;
  const auto set = [&](JointId j, const Eigen::Vector2d& p) { sk[j] = p; };
  const Eigen::Vector2d neck(0, 0);
  set(JointId::Neck, neck);
  set(JointId::Head, neck + Eigen::Vector2d(0, -kHead));
  const Eigen::Vector2d ls = neck + Eigen::Vector2d(kShoulderX, kShoulderY);
  const Eigen::Vector2d rs = neck + Eigen::Vector2d(-kShoulderX, kShoulderY);
  const Eigen::Vector2d lh = neck + Eigen::Vector2d(kHipX, kHipY);
  const Eigen::Vector2d rh = neck + Eigen::Vector2d(-kHipX, kHipY);
  set(JointId::LShoulder, ls);
  set(JointId::RShoulder, rs);
  set(JointId::LHip, lh);
  set(JointId::RHip, rh);
  const Eigen::Vector2d le = ls + swing(s.left[0], kUpperArm);
  const Eigen::Vector2d re = rs + swing(s.right[0], kUpperArm);
  set(JointId::LElbow, le);
  set(JointId::RElbow, re);
  set(JointId::LWrist, le + swing(s.left[1], kForearm));
  set(JointId::RWrist, re + swing(s.right[1], kForearm));
  const Eigen::Vector2d lk = lh + swing(s.left[2], kThigh);
  const Eigen::Vector2d rk = rh + swing(s.right[2], kThigh);
  set(JointId::LKnee, lk);
  set(JointId::RKnee, rk);
  set(JointId::LAnkle, lk + swing(s.left[3], kShin));
  set(JointId::RAnkle, rk + swing(s.right[3], kShin));
  return sk;
}

struct Sampler {
  std::mt19937_64 rng;
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal(double sd) { return sd > 0.0 ? std::normal_distribution<double>(0.0, sd)(rng) : 0.0; }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
};

// Jittered, scaled, rotated and placed instance of a stance.
Skeleton sample_pose(const Stance& stance, const SynthConfig& cfg, Sampler& s) {
  Stance st = stance;
  for (double& a : st.left) a += s.normal(8.0);
  for (double& a : st.right) a += s.normal(8.0);
  const Skeleton base = build(st);

  const double scale = s.uniform(0.85, 1.1);
  const double rot = s.normal(5.0) * std::numbers::pi / 180.0;
  Eigen::Matrix2d R;
  R << std::cos(rot), -std::sin(rot), std::sin(rot), std::cos(rot);
  Keypoints<double> kp = scale * R * base.keypoints();

  // Centre the bounding box inside the image with a margin.
  const Eigen::Vector2d lo = kp.rowwise().minCoeff(), hi = kp.rowwise().maxCoeff();
  const Eigen::Vector2d centre = 0.5 * (lo + hi);
  const Eigen::Vector2d half = 0.5 * (hi - lo);
  const double margin = 8.0;
  Eigen::Vector2d target;
  for (int a = 0; a < 2; ++a) {
    const double lo_t = half(a) + margin, hi_t = cfg.image_size - half(a) - margin;
    target(a) = lo_t < hi_t ? s.uniform(lo_t, hi_t) : 0.5 * cfg.image_size;
  }
  kp = kp.colwise() + (target - centre);
  for (int j = 0; j < kNumJoints; ++j) {
    kp(0, j) += s.normal(cfg.base_noise);
    kp(1, j) += s.normal(cfg.base_noise);
  }
  return Skeleton(kp);
}

Heatmap empty_map(JointId j, const SynthConfig& cfg) {
  Heatmap h;
  h.joint = j;
  const int cells = static_cast<int>(std::ceil(cfg.image_size / cfg.stride));
  h.grid = Eigen::ArrayXXd::Zero(cells, cells);
  h.stride = cfg.stride;
  return h;
}

void add_bump(Heatmap& h, const Eigen::Vector2d& px, double amplitude, double sigma_cells = 1.0) {
  const double cx = (px.x() - h.origin.x()) / h.stride;
  const double cy = (px.y() - h.origin.y()) / h.stride;
  for (int r = 0; r < h.height(); ++r) {
    for (int c = 0; c < h.width(); ++c) {
      const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
      h.grid(r, c) = std::max(h.grid(r, c), amplitude * std::exp(-0.5 * d2 / (sigma_cells * sigma_cells)));
    }
  }
}

// A location at least `min_cells` away from `avoid`.
Eigen::Vector2d random_location(const SynthConfig& cfg, Sampler& s, const Eigen::Vector2d* avoid,
                                double min_cells = 4.0) {
  const double lo = 2.0 * cfg.stride, hi = cfg.image_size - 2.0 * cfg.stride;
  for (;;) {
    Eigen::Vector2d p(s.uniform(lo, hi), s.uniform(lo, hi));
    if (avoid == nullptr || (p - *avoid).norm() >= min_cells * cfg.stride) return p;
  }
}

std::string make_id(const char* prefix, int a, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%d_%03d", prefix, a, i);
  return buf;
}

}  // namespace

Skeleton action_template(ActionLabel a, bool variant) {
  const Stance& s = kStances[static_cast<int>(a)];
  return build(variant ? mirrored(s) : s);
}

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus out;
  Sampler s{std::mt19937_64(cfg.seed)};

  const int n_fs = static_cast<int>(std::lround(cfg.fs_fraction * cfg.poses_per_action));
  for (int a = 0; a < cfg.n_actions; ++a) {
    const auto action = static_cast<ActionLabel>(a);
    const Stance& stance = kStances[a];
    const Stance variant = mirrored(stance);
    for (int i = 0; i < cfg.poses_per_action; ++i) {
      const bool fs = i < n_fs;
      const bool use_variant = !fs && s.bernoulli(cfg.variant_rate);
      const Skeleton pose = sample_pose(use_variant ? variant : stance, cfg, s);
      if (fs) {
        const std::string id = make_id("fs", a, i);
        out.split.fs.push_back({id, pose, action});
        out.ground_truth.emplace(id, pose);
        continue;
      }
      const std::string id = make_id("ws", a, i);
      out.split.ws.push_back({id, action});
      out.ground_truth.emplace(id, pose);

      std::vector<Heatmap> maps;
      for (int j = 0; j < kNumJoints; ++j) {
        Heatmap h = empty_map(static_cast<JointId>(j), cfg);
        const Eigen::Vector2d truth = pose.keypoints().col(j);
        add_bump(h, truth, s.uniform(0.7, 1.0));
        if (s.bernoulli(cfg.outlier_rate)) {
          add_bump(h, random_location(cfg, s, &truth), s.uniform(0.3, 0.8));
        }
        maps.push_back(std::move(h));
      }
      out.heatmaps.emplace(id, std::move(maps));
    }
  }

  for (int b = 0; b < cfg.n_backgrounds; ++b) {
    const std::string id = make_id("bg", 0, b);
    out.split.backgrounds.push_back(id);
    std::vector<Heatmap> maps;
    for (int j = 0; j < kNumJoints; ++j) {
      Heatmap h = empty_map(static_cast<JointId>(j), cfg);
      const int bumps = 1 + static_cast<int>(s.uniform(0.0, 2.0));
      for (int k = 0; k < bumps; ++k) add_bump(h, random_location(cfg, s, nullptr), s.uniform(0.2, 0.9));
      maps.push_back(std::move(h));
    }
    out.heatmaps.emplace(id, std::move(maps));
  }
  return out;
}

}  // namespace selfpose
