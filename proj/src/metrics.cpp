#include "selfpose/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace selfpose {

PcpResult pcp_correct(const Skeleton& gt, const Skeleton& est, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("PCP threshold must lie in (0, 1]");
  PcpResult r;
  r.all_correct = true;
  for (int l = 0; l < kNumLimbs; ++l) {
    const Limb& limb = kLimbs[l];
    const double tol = eps * gt.limb_length(limb);
    const double ea = (est[limb.a] - gt[limb.a]).norm();
    const double eb = (est[limb.b] - gt[limb.b]).norm();
    r.limbs[l] = ea <= tol && eb <= tol;
    r.all_correct = r.all_correct && r.limbs[l];
  }
  return r;
}

double reference_length(const Skeleton& gt, ReferenceLength ref) {
  if (ref == ReferenceLength::HeadSegment) return gt.limb_length(kLimbs[0]);
  const Eigen::Vector2d extent = gt.keypoints().rowwise().maxCoeff() - gt.keypoints().rowwise().minCoeff();
  return extent.maxCoeff();
}

std::array<bool, kNumJoints> pck_correct(const Skeleton& gt, const Skeleton& est, double frac,
                                         ReferenceLength ref) {
  if (!(frac > 0.0)) throw std::invalid_argument("PCK fraction must be positive");
  const double len = reference_length(gt, ref);
  if (!(len > 0.0)) throw DataError("degenerate reference");
  const double tol = frac * len;
  std::array<bool, kNumJoints> out{};
  for (int j = 0; j < kNumJoints; ++j) {
    out[j] = (est.keypoints().col(j) - gt.keypoints().col(j)).norm() <= tol;
  }
  return out;
}

namespace {

constexpr std::array<std::array<JointId, 2>, kNumPckColumns> kColumnJoints{{
    {JointId::Head, JointId::Head},
    {JointId::LShoulder, JointId::RShoulder},
    {JointId::LElbow, JointId::RElbow},
    {JointId::LWrist, JointId::RWrist},
    {JointId::LHip, JointId::RHip},
    {JointId::LKnee, JointId::RKnee},
    {JointId::LAnkle, JointId::RAnkle},
}};

constexpr std::array<const char*, kNumPckColumns> kColumnNames{
    "Head", "Shoulder", "Elbow", "Wrist", "Hip", "Knee", "Ankle"};

}  // namespace

std::array<double, kNumPckColumns> MetricsReport::column_pck() const {
  std::array<double, kNumPckColumns> out{};
  for (int c = 0; c < kNumPckColumns; ++c) {
    out[c] = 0.5 * (per_joint_pck[index(kColumnJoints[c][0])] +
                    per_joint_pck[index(kColumnJoints[c][1])]);
  }
  return out;
}

MetricsReport selection_stats(const std::vector<GroundTruthImage>& truth,
                              const std::vector<std::vector<Skeleton>>& candidates,
                              const std::vector<std::optional<Skeleton>>& selected, double eps) {
  if (candidates.size() != truth.size() || selected.size() != truth.size()) {
    throw std::invalid_argument("selection_stats: inputs are not aligned per image");
  }
  MetricsReport r;
  SelectionCounts& c = r.counts;
  c.images = static_cast<int>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& gt = truth[i].gt;
    bool detected = false;
    if (gt) {
      for (const auto& cand : candidates[i]) {
        if (pcp_correct(*gt, cand, eps).all_correct) {
          detected = true;
          break;
        }
      }
    }
    if (detected) ++c.detected;
    if (selected[i]) {
      ++c.selected;
      if (gt && pcp_correct(*gt, *selected[i], eps).all_correct) ++c.correct_selected;
    }
  }
  if (c.images > 0) {
    r.detected_tp_rate = double(c.detected) / c.images;
    r.selected_tp_rate = double(c.correct_selected) / c.images;
  }
  if (c.selected > 0) r.precision = double(c.correct_selected) / c.selected;
  if (c.detected > 0) r.recall = double(c.correct_selected) / c.detected;
  return r;
}

void accumulate_pck(MetricsReport& report, const std::vector<PoseEvalPair>& pairs, double frac,
                    ReferenceLength ref) {
  std::array<int, kNumJoints> hits{};
  std::map<ActionLabel, std::pair<int, int>> per_action;  // correct joints, total joints
  for (const auto& p : pairs) {
    const auto ok = pck_correct(p.gt, p.est, frac, ref);
    int n_ok = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      hits[j] += ok[j];
      n_ok += ok[j];
    }
    if (p.action) {
      auto& acc = per_action[*p.action];
      acc.first += n_ok;
      acc.second += kNumJoints;
    }
  }
  double total = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    report.per_joint_pck[j] = pairs.empty() ? 0.0 : double(hits[j]) / pairs.size();
    total += report.per_joint_pck[j];
  }
  report.mean_pck = total / kNumJoints;
  report.per_action_pck.clear();
  for (const auto& [a, acc] : per_action) {
    report.per_action_pck[a] = double(acc.first) / acc.second;
  }
}

std::string format_pck_table(const MetricsReport& report) {
  std::ostringstream os;
  char buf[64];
  os << "          ";
  for (const char* name : kColumnNames) {
    std::snprintf(buf, sizeof buf, "%9s", name);
    os << buf;
  }
  os << "     Mean\n";
  os << "all       ";
  for (double v : report.column_pck()) {
    std::snprintf(buf, sizeof buf, "%9.1f", 100.0 * v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%9.1f\n", 100.0 * report.mean_pck);
  os << buf;
  for (const auto& [a, v] : report.per_action_pck) {
    std::snprintf(buf, sizeof buf, "%-10s", std::string(action_name(a)).c_str());
    os << buf << std::string(9 * kNumPckColumns, ' ');
    std::snprintf(buf, sizeof buf, "%9.1f\n", 100.0 * v);
    os << buf;
  }
  return os.str();
}

std::string format_report_record(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "mean_pck=" << report.mean_pck << '\n';
  for (int j = 0; j < kNumJoints; ++j) {
    os << "pck." << joint_name(static_cast<JointId>(j)) << '=' << report.per_joint_pck[j] << '\n';
  }
  for (const auto& [a, v] : report.per_action_pck) os << "pck_action." << action_name(a) << '=' << v << '\n';
  os << "detected_tp_rate=" << report.detected_tp_rate << '\n';
  os << "selected_tp_rate=" << report.selected_tp_rate << '\n';
  const auto optional = [&](const char* key, const std::optional<double>& v) {
    os << key << '=';
    if (v) os << *v;
    else os << "absent";
    os << '\n';
  };
  optional("precision", report.precision);
  optional("recall", report.recall);
  os << "count.images=" << report.counts.images << '\n';
  os << "count.selected=" << report.counts.selected << '\n';
  os << "count.correct_selected=" << report.counts.correct_selected << '\n';
  os << "count.detected=" << report.counts.detected << '\n';
  return os.str();
}

}  // namespace selfpose
