#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>

#include "selfpose/skeleton.hpp"

namespace selfpose {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// C(n,2) distances + C(n,2) orientations + 3*C(n,3) inner angles.
constexpr Eigen::Index relational_feature_size(Eigen::Index n) {
  const Eigen::Index pairs = n * (n - 1) / 2;
  const Eigen::Index triples = n * (n - 1) * (n - 2) / 6;
  return 2 * pairs + 3 * triples;
}

inline constexpr Eigen::Index kNumJointPairs = kNumJoints * (kNumJoints - 1) / 2;
inline constexpr Eigen::Index kRelationalDim = relational_feature_size(kNumJoints);
static_assert(kRelationalDim == 1274);

namespace detail {

// Angle at `vertex` between the rays to `p` and `q`, in [0, pi]. Zero when
// either ray is degenerate.
template <typename Scalar, typename V>
Scalar inner_angle(const V& vertex, const V& p, const V& q) {
  const Scalar ux = p(0) - vertex(0), uy = p(1) - vertex(1);
  const Scalar vx = q(0) - vertex(0), vy = q(1) - vertex(1);
  if ((ux == Scalar(0) && uy == Scalar(0)) || (vx == Scalar(0) && vy == Scalar(0))) {
    return Scalar(0);
  }
  using std::abs;
  using std::atan2;
  return atan2(abs(ux * vy - uy * vx), ux * vx + uy * vy);
}

}  // namespace detail

// Relational configuration feature over the columns of a 2 x n point matrix.
// Pairs (i<j) and triples (i<j<k) are enumerated lexicographically; each
// triple contributes the inner angles at i, j, k in that order. Orientations
// lie in (-pi, pi]; the orientation of a zero-length vector is 0.
template <typename Derived>
Vec<typename Derived::Scalar> relational_feature(const Eigen::MatrixBase<Derived>& pts) {
  using Scalar = typename Derived::Scalar;
  static_assert(Derived::RowsAtCompileTime == 2 || Derived::RowsAtCompileTime == Eigen::Dynamic);
  const Eigen::Index n = pts.cols();
  const Eigen::Index pairs = n * (n - 1) / 2;

  Vec<Scalar> out(relational_feature_size(n));
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j, ++p) {
      const Scalar dx = pts(0, j) - pts(0, i);
      const Scalar dy = pts(1, j) - pts(1, i);
      using std::atan2;
      using std::hypot;
      out(p) = hypot(dx, dy);
      Scalar theta = (dx == Scalar(0) && dy == Scalar(0)) ? Scalar(0) : atan2(dy, dx);
      if (theta <= -std::numbers::pi_v<Scalar>) theta = std::numbers::pi_v<Scalar>;
      out(pairs + p) = theta;
    }
  }

  Eigen::Index t = 2 * pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      for (Eigen::Index k = j + 1; k < n; ++k) {
        const auto a = pts.col(i), b = pts.col(j), c = pts.col(k);
        out(t++) = detail::inner_angle<Scalar>(a, b, c);
        out(t++) = detail::inner_angle<Scalar>(b, a, c);
        out(t++) = detail::inner_angle<Scalar>(c, a, b);
      }
    }
  }
  return out;
}

struct FeatureOptions {
  // Divide the distance block by the torso length (neck to hip midpoint).
  bool normalize_scale = true;
};

// 1274-D feature of a skeleton. Raw pixel distances unless normalization is
// requested; degenerate torsos are left unnormalized.
Eigen::VectorXd relational_feature(const Skeleton& s, FeatureOptions opts = {.normalize_scale = false});

// Single-channel intensity grid in [0,1]; row-major, pixel (x, y) = at(x, y).
class GrayRaster {
 public:
  using Pixels = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  GrayRaster() = default;
  GrayRaster(int width, int height, double fill = 0.0)
      : pixels_(Pixels::Constant(height, width, fill)) {}
  explicit GrayRaster(Pixels pixels) : pixels_(std::move(pixels)) {}

  int width() const { return static_cast<int>(pixels_.cols()); }
  int height() const { return static_cast<int>(pixels_.rows()); }

  double at(int x, int y) const { return pixels_(y, x); }
  double& at(int x, int y) { return pixels_(y, x); }
  // Border-replicated access.
  double clamped(int x, int y) const;
  // Bilinear sample at a real-valued position, border-replicated.
  double sample(double x, double y) const;

  const Pixels& pixels() const { return pixels_; }
  Pixels& pixels() { return pixels_; }

 private:
  Pixels pixels_;
};

struct HogConfig {
  int window_w = 16;
  int window_h = 16;
  int cell = 8;
  int block = 2;  // cells per block side
  int bins = 9;
  bool signed_orientation = false;

  int cells_x() const { return window_w / cell; }
  int cells_y() const { return window_h / cell; }
  int blocks_x() const { return cells_x() - block + 1; }
  int blocks_y() const { return cells_y() - block + 1; }
  Eigen::Index descriptor_size() const {
    return Eigen::Index(blocks_x()) * blocks_y() * block * block * bins;
  }
  // Throws std::invalid_argument on an inconsistent geometry.
  void validate() const;
};

// Dalal-Triggs HOG over a cfg.window_w x cfg.window_h window centred at
// `center` (shifted to lie inside the image). Centred [-1,0,1] gradients,
// magnitude-weighted votes interpolated between the two nearest orientation
// bins (bin b centred at b * range / bins), overlapping blocks with a
// one-cell stride, each block scaled to unit L2 norm (zero blocks stay zero).
Eigen::VectorXd hog_descriptor(const GrayRaster& image, const Eigen::Vector2d& center,
                               const HogConfig& cfg);

struct PrFeature {
  Eigen::VectorXd config;
  std::optional<Eigen::VectorXd> appearance;

  Eigen::Index combined_dim() const {
    return config.size() + (appearance ? appearance->size() : 0);
  }
  Eigen::VectorXd combined() const;
};

inline constexpr int kNumPartWindows = kNumLimbs + 1;

// Square part windows: 13 limb midpoints then the head keypoint; side is
// 1.5x the limb length (head-neck for the head) clamped to [16, 96] px.
struct PartWindow {
  Eigen::Vector2d center;
  double side;
};
std::array<PartWindow, kNumPartWindows> part_windows(const Skeleton& s);

// Full pose representation. Appearance (14 part HOG descriptors, each window
// resampled to cfg's window size) is present iff an image is given.
PrFeature pr_feature(const Skeleton& s, const GrayRaster* image = nullptr,
                     const HogConfig* cfg = nullptr, FeatureOptions opts = {});

}  // namespace selfpose
