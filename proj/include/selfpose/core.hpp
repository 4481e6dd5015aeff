#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "selfpose/skeleton.hpp"

namespace selfpose {

// Malformed or inconsistent input data (as opposed to a usage error).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ActionLabel : int {
  Athletics = 0,
  Badminton,
  Baseball,
  Gymnastics,
  Soccer,
  Tennis,
  Volleyball,
  General,
};

inline constexpr int kNumActions = 8;

std::string_view action_name(ActionLabel a);
// Throws DataError on anything outside the closed set. "parkour" is an alias
// of gymnastics.
ActionLabel parse_action(std::string_view name);

struct CandidatePose {
  Skeleton skeleton;
  double score = 0.0;
  std::string image_id;
  int stage = 1;
  std::optional<ActionLabel> action;
};

struct AnnotatedImage {
  std::string image_id;
  Skeleton annotation;
  ActionLabel action = ActionLabel::General;
};

struct LabeledImage {
  std::string image_id;
  ActionLabel action = ActionLabel::General;
};

// FS: pose + action annotated; WS: action only; US: nothing; backgrounds
// contain no person.
struct DatasetSplit {
  std::vector<AnnotatedImage> fs;
  std::vector<LabeledImage> ws;
  std::vector<std::string> us;
  std::vector<std::string> backgrounds;
};

struct Violation {
  enum class Kind { SharedImage, NonFiniteCoordinate, DuplicateImage };
  Kind kind;
  std::string image_id;
  std::string detail;
};

std::vector<Violation> validate_split(const DatasetSplit& split);

}  // namespace selfpose
