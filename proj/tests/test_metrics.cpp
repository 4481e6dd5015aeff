#include <doctest.h>

#include <algorithm>
#include <limits>

#include "fixtures.hpp"
#include "selfpose/metrics.hpp"

using namespace selfpose;

namespace {

// Shortest limb touching each joint.
std::array<double, kNumJoints> min_incident(const Skeleton& s) {
  std::array<double, kNumJoints> r;
  r.fill(std::numeric_limits<double>::infinity());
  for (const Limb& l : kLimbs) {
    r[index(l.a)] = std::min(r[index(l.a)], s.limb_length(l));
    r[index(l.b)] = std::min(r[index(l.b)], s.limb_length(l));
  }
  return r;
}

// One image id per entry; `correct` says whether the selection is the truth
// or a clearly wrong pose, nullopt for no selection.
struct Fixture {
  std::vector<GroundTruthImage> truth;
  std::vector<std::vector<Skeleton>> candidates;
  std::vector<std::optional<Skeleton>> selected;

  void add(bool candidate_correct, std::optional<bool> pick_correct) {
    const Skeleton gt = fixtures::standing();
    const Skeleton wrong = gt.translated({80.0, 0.0});
    truth.push_back({"img" + std::to_string(truth.size()), gt, ActionLabel::Tennis});
    candidates.push_back({wrong});
    if (candidate_correct) candidates.back().push_back(gt);
    if (pick_correct) selected.push_back(*pick_correct ? gt : wrong);
    else selected.push_back(std::nullopt);
  }
};

}  // namespace

TEST_CASE("PCP correctness") {
  const Skeleton gt = fixtures::standing();
  CHECK(pcp_correct(gt, gt, 0.5).all_correct);

  SUBCASE("wrist past the threshold") {
    const Limb forearm = kLimbs[5];
    REQUIRE(forearm.b == JointId::LWrist);
    Skeleton est = gt;
    est[JointId::LWrist].x() += 0.71 * gt.limb_length(forearm);
    const auto r = pcp_correct(gt, est, 0.7);
    CHECK_FALSE(r.limbs[5]);
    CHECK_FALSE(r.all_correct);
    CHECK(std::count(r.limbs.begin(), r.limbs.end(), true) == kNumLimbs - 1);
  }

  SUBCASE("every joint moved by half its shortest limb") {
    const auto len = min_incident(gt);
    Skeleton est = gt;
    for (int j = 0; j < kNumJoints; ++j) est.keypoints().col(j) += 0.5 * len[j] * Eigen::Vector2d(0.6, -0.8);
    CHECK(pcp_correct(gt, est, 0.7).all_correct);
  }

  SUBCASE("zero-length limb") {
    Skeleton folded = gt;
    folded[JointId::RWrist] = Eigen::Vector2d(folded[JointId::RElbow]);
    CHECK(pcp_correct(folded, folded, 0.5).all_correct);
    Skeleton est = folded;
    est[JointId::RWrist].y() += 1e-6;
    CHECK_FALSE(pcp_correct(folded, est, 0.5).limbs[6]);
  }

  CHECK_THROWS_AS(pcp_correct(gt, gt, 0.0), std::invalid_argument);
}

TEST_CASE("PCK and PCKh") {
  const Skeleton gt = fixtures::standing();
  const auto all = [](const std::array<bool, kNumJoints>& a) { return int(std::count(a.begin(), a.end(), true)); };
  CHECK(all(pck_correct(gt, gt, 0.2, ReferenceLength::BoundingBox)) == 14);

  Skeleton est = gt;
  est[JointId::RAnkle].x() += 0.25 * reference_length(gt, ReferenceLength::BoundingBox);
  CHECK(all(pck_correct(gt, est, 0.2, ReferenceLength::BoundingBox)) == 13);

  // head segment of exactly 20 px, elbow 9 px off
  Skeleton h = gt;
  h[JointId::Head] = Eigen::Vector2d(h[JointId::Neck]) + Eigen::Vector2d(0.0, -20.0);
  Skeleton e = h;
  e[JointId::LElbow].x() += 9.0;
  CHECK(reference_length(h, ReferenceLength::HeadSegment) == doctest::Approx(20.0));
  CHECK(pck_correct(h, e, 0.5, ReferenceLength::HeadSegment)[index(JointId::LElbow)]);
  e[JointId::LElbow].x() += 1.5;
  CHECK_FALSE(pck_correct(h, e, 0.5, ReferenceLength::HeadSegment)[index(JointId::LElbow)]);

  CHECK(all(pck_correct(gt, gt.translated({500.0, 500.0}), 1e6, ReferenceLength::BoundingBox)) == 14);

  const Skeleton point(Keypoints<double>::Constant(3.0));
  CHECK_THROWS_WITH_AS(pck_correct(point, point, 0.2, ReferenceLength::BoundingBox), "degenerate reference",
                       DataError);
}

TEST_CASE("selection counts and rates") {
  SUBCASE("eight of ten selections correct") {
    Fixture f;
    for (int i = 0; i < 8; ++i) f.add(true, true);
    for (int i = 0; i < 2; ++i) f.add(true, false);
    const auto r = selection_stats(f.truth, f.candidates, f.selected, 0.5);
    CHECK(r.counts.images == 10);
    CHECK(r.counts.selected == 10);
    CHECK(r.counts.correct_selected == 8);
    CHECK(r.counts.detected == 10);
    REQUIRE(r.precision.has_value());
    CHECK(*r.precision == 0.8);
    CHECK(*r.recall == 0.8);
    CHECK(r.selected_tp_rate == 0.8);
    CHECK(r.detected_tp_rate == 1.0);
  }

  SUBCASE("perfect selection") {
    Fixture f;
    for (int i = 0; i < 6; ++i) f.add(true, true);
    const auto r = selection_stats(f.truth, f.candidates, f.selected, 0.5);
    CHECK(r.detected_tp_rate == 1.0);
    CHECK(r.selected_tp_rate == 1.0);
    CHECK(*r.precision == 1.0);
    CHECK(*r.recall == 1.0);
  }

  SUBCASE("nothing selected") {
    Fixture f;
    for (int i = 0; i < 4; ++i) f.add(true, std::nullopt);
    const auto r = selection_stats(f.truth, f.candidates, f.selected, 0.5);
    CHECK(r.selected_tp_rate == 0.0);
    CHECK_FALSE(r.precision.has_value());
    CHECK(*r.recall == 0.0);
  }

  SUBCASE("mixed counts, order does not matter") {
    // 3 correct picks, 2 wrong picks, 1 undetected image with a wrong pick,
    // 2 images without selection: STP 6, ATP n STP 3, CP n ATP 7, ATP 9.
    Fixture f;
    for (int i = 0; i < 3; ++i) f.add(true, true);
    for (int i = 0; i < 2; ++i) f.add(true, false);
    f.add(false, false);
    for (int i = 0; i < 2; ++i) f.add(true, std::nullopt);
    f.add(false, std::nullopt);
    const auto r = selection_stats(f.truth, f.candidates, f.selected, 0.5);
    CHECK(r.counts.images == 9);
    CHECK(r.counts.selected == 6);
    CHECK(r.counts.correct_selected == 3);
    CHECK(r.counts.detected == 7);
    CHECK(*r.precision == 3.0 / 6.0);
    CHECK(*r.recall == 3.0 / 7.0);
    CHECK(r.selected_tp_rate == 3.0 / 9.0);
    CHECK(r.detected_tp_rate == 7.0 / 9.0);
    CHECK(r.selected_tp_rate <= r.detected_tp_rate);

    Fixture g = f;
    std::reverse(g.truth.begin(), g.truth.end());
    std::reverse(g.candidates.begin(), g.candidates.end());
    std::reverse(g.selected.begin(), g.selected.end());
    const auto s = selection_stats(g.truth, g.candidates, g.selected, 0.5);
    CHECK(*s.precision == *r.precision);
    CHECK(*s.recall == *r.recall);
  }

  CHECK_THROWS_AS(selection_stats({{"a", std::nullopt, std::nullopt}}, {}, {}, 0.5), std::invalid_argument);
}

TEST_CASE("PCK accumulation and table") {
  const Skeleton gt = fixtures::standing();
  Skeleton off = gt;
  off[JointId::LAnkle].x() += 500.0;
  MetricsReport r;
  accumulate_pck(r, {{gt, gt, ActionLabel::Tennis}, {gt, off, ActionLabel::Soccer}}, 0.2,
                 ReferenceLength::BoundingBox);
  CHECK(r.per_joint_pck[index(JointId::LAnkle)] == 0.5);
  CHECK(r.per_joint_pck[index(JointId::RAnkle)] == 1.0);
  CHECK(r.mean_pck == doctest::Approx(27.0 / 28.0));
  CHECK(r.per_action_pck.at(ActionLabel::Tennis) == 1.0);
  CHECK(r.per_action_pck.at(ActionLabel::Soccer) == doctest::Approx(13.0 / 14.0));
  CHECK(r.column_pck()[int(PckColumn::Ankle)] == 0.75);

  MetricsReport perfect;
  accumulate_pck(perfect, {{gt, gt, std::nullopt}}, 0.2, ReferenceLength::BoundingBox);
  const std::string table = format_pck_table(perfect);
  CHECK(table.find("Head") != std::string::npos);
  CHECK(table.find("Ankle") != std::string::npos);
  CHECK(table.find("Mean") != std::string::npos);
  CHECK(table.find("100.0") != std::string::npos);
  const std::string rec = format_report_record(perfect);
  CHECK(rec.find("mean_pck=1\n") != std::string::npos);
  CHECK(rec.find("precision=absent") != std::string::npos);
}
