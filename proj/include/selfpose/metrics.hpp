#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfpose/core.hpp"
#include "selfpose/skeleton.hpp"

namespace selfpose {

struct PcpResult {
  std::array<bool, kNumLimbs> limbs{};
  bool all_correct = false;
};

// A limb is correct iff both estimated endpoints lie within eps x (ground-truth
// limb length) of their ground-truth positions. A zero-length ground-truth
// limb is correct only for exact endpoints.
PcpResult pcp_correct(const Skeleton& gt, const Skeleton& est, double eps);

enum class ReferenceLength {
  BoundingBox,  // max side of the tight box around the GT keypoints (PCK)
  HeadSegment,  // head-neck length (PCKh)
};

double reference_length(const Skeleton& gt, ReferenceLength ref);

// Throws DataError("degenerate reference") on a zero reference length.
std::array<bool, kNumJoints> pck_correct(const Skeleton& gt, const Skeleton& est, double frac,
                                         ReferenceLength ref);

// Columns of the summary table; left/right joints are averaged.
enum class PckColumn { Head, Shoulder, Elbow, Wrist, Hip, Knee, Ankle };
inline constexpr int kNumPckColumns = 7;

struct SelectionCounts {
  int images = 0;        // |ATP|: one true pose per WS image
  int selected = 0;      // |STP|
  int correct_selected = 0;  // |ATP n STP|
  int detected = 0;      // |CP n ATP|
};

struct MetricsReport {
  std::array<double, kNumJoints> per_joint_pck{};
  double mean_pck = 0.0;
  std::map<ActionLabel, double> per_action_pck;
  double detected_tp_rate = 0.0;
  double selected_tp_rate = 0.0;
  std::optional<double> precision;  // absent when nothing was selected
  std::optional<double> recall;     // absent when nothing was detected
  SelectionCounts counts;

  std::array<double, kNumPckColumns> column_pck() const;
};

struct GroundTruthImage {
  std::string image_id;
  std::optional<Skeleton> gt;
  std::optional<ActionLabel> action;
};

// Detected/Selected TP rates and precision/recall over per-image candidate
// lists and selections (all three aligned with `truth`). A pose is a true
// positive when every limb passes PCP at `eps`.
MetricsReport selection_stats(const std::vector<GroundTruthImage>& truth,
                              const std::vector<std::vector<Skeleton>>& candidates,
                              const std::vector<std::optional<Skeleton>>& selected, double eps);

struct PoseEvalPair {
  Skeleton gt;
  Skeleton est;
  std::optional<ActionLabel> action;
};

// Fills the PCK fields of a report.
void accumulate_pck(MetricsReport& report, const std::vector<PoseEvalPair>& pairs, double frac,
                    ReferenceLength ref);

// Table with columns Head, Shoulder, Elbow, Wrist, Hip, Knee, Ankle, Mean
// (percentages), one row per action present plus an "all" row.
std::string format_pck_table(const MetricsReport& report);
// key=value lines.
std::string format_report_record(const MetricsReport& report);

}  // namespace selfpose
