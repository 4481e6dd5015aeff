#include "selfpose/core.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <string>

namespace selfpose {

namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames{
    "head",    "neck",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
    "r_wrist", "l_hip",   "r_hip",      "l_knee",     "r_knee",  "l_ankle", "r_ankle",
};

constexpr std::array<std::string_view, kNumActions> kActionNames{
    "athletics", "badminton", "baseball", "gymnastics",
    "soccer",    "tennis",    "volleyball", "general",
};

}  // namespace

std::string_view joint_name(JointId j) { return kJointNames[index(j)]; }

std::optional<JointId> parse_joint(std::string_view name) {
  for (int i = 0; i < kNumJoints; ++i) {
    if (kJointNames[i] == name) return static_cast<JointId>(i);
  }
  return std::nullopt;
}

std::optional<JointId> first_nonfinite_joint(const Skeleton& s) {
  for (int j = 0; j < kNumJoints; ++j) {
    if (!s.keypoints().col(j).allFinite()) return static_cast<JointId>(j);
  }
  return std::nullopt;
}

std::string_view action_name(ActionLabel a) { return kActionNames[static_cast<int>(a)]; }

ActionLabel parse_action(std::string_view name) {
  if (name == "parkour") return ActionLabel::Gymnastics;
  for (int i = 0; i < kNumActions; ++i) {
    if (kActionNames[i] == name) return static_cast<ActionLabel>(i);
  }
  throw DataError("unknown action label '" + std::string(name) + "'");
}

std::vector<Violation> validate_split(const DatasetSplit& split) {
  std::vector<Violation> out;

  // image id -> names of the sets it occurs in (one entry per occurrence)
  std::map<std::string, std::vector<std::string_view>> seen;
  for (const auto& e : split.fs) seen[e.image_id].push_back("FS");
  for (const auto& e : split.ws) seen[e.image_id].push_back("WS");
  for (const auto& id : split.us) seen[id].push_back("US");
  for (const auto& id : split.backgrounds) seen[id].push_back("background");

  for (const auto& [id, sets] : seen) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
      for (std::size_t k = i + 1; k < sets.size(); ++k) {
        if (sets[i] == sets[k]) {
          out.push_back({Violation::Kind::DuplicateImage, id,
                         "image '" + id + "' listed twice in " + std::string(sets[i])});
        } else {
          out.push_back({Violation::Kind::SharedImage, id,
                         "image '" + id + "' in both " + std::string(sets[i]) + " and " +
                             std::string(sets[k])});
        }
      }
    }
  }

  for (const auto& e : split.fs) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (!e.annotation.keypoints().col(j).allFinite()) {
        const auto name = std::string(joint_name(static_cast<JointId>(j)));
        out.push_back({Violation::Kind::NonFiniteCoordinate, e.image_id,
                       "image '" + e.image_id + "' joint " + name + " is not finite"});
      }
    }
  }
  return out;
}

}  // namespace selfpose
