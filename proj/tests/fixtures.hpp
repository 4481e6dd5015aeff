#pragma once

#include <exception>
#include <random>
#include <string>

#include "selfpose/skeleton.hpp"
#include "selfpose/synth.hpp"

namespace fixtures {

// A plain standing pose placed in the image.
inline selfpose::Skeleton standing(double x = 100.0, double y = 40.0) {
  return selfpose::action_template(selfpose::ActionLabel::General).translated({x, y});
}

// Random keypoints in a 200 px square.
inline selfpose::Skeleton random_skeleton(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 200.0);
  selfpose::Keypoints<double> kp;
  for (int j = 0; j < selfpose::kNumJoints; ++j) kp.col(j) << u(rng), u(rng);
  return selfpose::Skeleton(kp);
}

// Message of the exception `f` throws, empty if it returns normally.
template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

inline bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace fixtures
