#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <Eigen/Core>

namespace selfpose {

inline constexpr int kNumJoints = 14;
inline constexpr int kNumLimbs = 13;

// Named 14-keypoint body model (LSP joint set, re-indexed top-down).
enum class JointId : int {
  Head = 0,
  Neck,
  LShoulder,
  RShoulder,
  LElbow,
  RElbow,
  LWrist,
  RWrist,
  LHip,
  RHip,
  LKnee,
  RKnee,
  LAnkle,
  RAnkle,
};

constexpr int index(JointId j) { return static_cast<int>(j); }

std::string_view joint_name(JointId j);
std::optional<JointId> parse_joint(std::string_view name);

struct Limb {
  JointId a;
  JointId b;
};

// Kinematic tree shared by every skeleton. The torso is carried by the two
// neck-hip edges.
inline constexpr std::array<Limb, kNumLimbs> kLimbs{{
    {JointId::Head, JointId::Neck},
    {JointId::Neck, JointId::LShoulder},
    {JointId::Neck, JointId::RShoulder},
    {JointId::LShoulder, JointId::LElbow},
    {JointId::RShoulder, JointId::RElbow},
    {JointId::LElbow, JointId::LWrist},
    {JointId::RElbow, JointId::RWrist},
    {JointId::Neck, JointId::LHip},
    {JointId::Neck, JointId::RHip},
    {JointId::LHip, JointId::LKnee},
    {JointId::RHip, JointId::RKnee},
    {JointId::LKnee, JointId::LAnkle},
    {JointId::RKnee, JointId::RAnkle},
}};

template <typename Scalar>
using Keypoints = Eigen::Matrix<Scalar, 2, kNumJoints>;

// 14 named 2-D keypoints in pixels, column j holds joint j.
template <typename Scalar>
class BasicSkeleton {
 public:
  using Point = Eigen::Matrix<Scalar, 2, 1>;

  BasicSkeleton() : keypoints_(Keypoints<Scalar>::Zero()) {}
  explicit BasicSkeleton(const Keypoints<Scalar>& keypoints) : keypoints_(keypoints) {}

  const Keypoints<Scalar>& keypoints() const { return keypoints_; }
  Keypoints<Scalar>& keypoints() { return keypoints_; }

  Point operator[](JointId j) const { return keypoints_.col(index(j)); }
  auto operator[](JointId j) { return keypoints_.col(index(j)); }

  Scalar limb_length(const Limb& limb) const {
    return (keypoints_.col(index(limb.a)) - keypoints_.col(index(limb.b))).norm();
  }

  Point limb_midpoint(const Limb& limb) const {
    return Scalar(0.5) * (keypoints_.col(index(limb.a)) + keypoints_.col(index(limb.b)));
  }

  // Neck to hip-midpoint distance.
  Scalar torso_length() const {
    const Point hip_mid = Scalar(0.5) * (keypoints_.col(index(JointId::LHip)) +
                                         keypoints_.col(index(JointId::RHip)));
    return (keypoints_.col(index(JointId::Neck)) - hip_mid).norm();
  }

  bool all_finite() const { return keypoints_.allFinite(); }

  BasicSkeleton translated(const Point& t) const {
    return BasicSkeleton(keypoints_.colwise() + t);
  }

  friend bool operator==(const BasicSkeleton& a, const BasicSkeleton& b) {
    return a.keypoints_ == b.keypoints_;
  }

 private:
  Keypoints<Scalar> keypoints_;
};

using Skeleton = BasicSkeleton<double>;

// Returns the first non-finite joint, if any.
std::optional<JointId> first_nonfinite_joint(const Skeleton& s);

}  // namespace selfpose
