#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "selfpose/candidates.hpp"

using namespace selfpose;

namespace {

Heatmap blank(JointId j, int w = 24, int h = 20, double stride = 4.0) {
  Heatmap m;
  m.joint = j;
  m.grid = Eigen::ArrayXXd::Zero(h, w);
  m.stride = stride;
  return m;
}

void bump(Heatmap& m, double col, double row, double amp, double sigma = 1.0) {
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const double d2 = (c - col) * (c - col) + (r - row) * (r - row);
      m.grid(r, c) = std::max(m.grid(r, c), amp * std::exp(-0.5 * d2 / (sigma * sigma)));
    }
  }
}

// 14 maps with a single bump per joint at (2 + j, 3 + j / 2) cells.
std::vector<Heatmap> single_peak_maps() {
  std::vector<Heatmap> maps;
  for (int j = 0; j < kNumJoints; ++j) {
    Heatmap m = blank(static_cast<JointId>(j), 32, 32);
    bump(m, 2.0 + 2 * j % 28, 3.0 + j, 0.5 + 0.03 * j);
    maps.push_back(m);
  }
  return maps;
}

CandidatePose pose_at(double x, double score, const std::string& id, int stage) {
  CandidatePose c;
  c.skeleton = Skeleton(Keypoints<double>::Constant(x));
  c.score = score;
  c.image_id = id;
  c.stage = stage;
  return c;
}

}  // namespace

TEST_CASE("local maxima") {
  const CandidateGenConfig cfg;

  SUBCASE("single off-grid bump") {
    Heatmap m = blank(JointId::Neck);
    m.origin = {10.0, -2.0};
    bump(m, 9.3, 6.6, 0.9);
    const auto peaks = local_maxima(m, cfg);
    REQUIRE(peaks.size() == 1);
    const Eigen::Vector2d centre = m.to_pixels(9.3, 6.6);
    CHECK(std::abs(peaks[0].x - centre.x()) <= 0.5 * m.stride);
    CHECK(std::abs(peaks[0].y - centre.y()) <= 0.5 * m.stride);
  }

  SUBCASE("uniform grid has no strict maximum") {
    Heatmap m = blank(JointId::Neck);
    m.grid.setConstant(0.6);
    CHECK(local_maxima(m, cfg).empty());
  }

  SUBCASE("below threshold") {
    Heatmap m = blank(JointId::Neck);
    bump(m, 5, 5, 0.05);
    CHECK(local_maxima(m, cfg).empty());
  }

  SUBCASE("neighbouring peaks collapse to the larger") {
    Heatmap m = blank(JointId::Neck);
    m.grid(5, 5) = 0.9;
    m.grid(5, 6) = 0.8;
    auto peaks = local_maxima(m, cfg);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0].value == 0.9);
    // two strict maxima two cells apart, inside the suppression radius
    m.grid(5, 6) = 0.1;
    m.grid(5, 7) = 0.8;
    peaks = local_maxima(m, cfg);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0].value == 0.9);
    CandidateGenConfig tight = cfg;
    tight.nms_radius = 1.0;
    CHECK(local_maxima(m, tight).size() == 2);
  }

  SUBCASE("top_k keeps the strongest") {
    Heatmap m = blank(JointId::Neck, 40, 40);
    bump(m, 5, 5, 0.3);
    bump(m, 20, 5, 0.9);
    bump(m, 5, 20, 0.5);
    bump(m, 30, 30, 0.7);
    const auto peaks = local_maxima(m, cfg);
    REQUIRE(peaks.size() == 3);
    CHECK(peaks[0].value == doctest::Approx(0.9));
    CHECK(peaks[1].value == doctest::Approx(0.7));
    CHECK(peaks[2].value == doctest::Approx(0.5));
  }
}

TEST_CASE("beam search equals exhaustive enumeration on four joints") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> u(1, 64);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Peak>> peaks(4);
    std::vector<std::vector<double>> values(4);
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 3; ++k) {
        const double v = u(rng) / 64.0;  // dyadic, so sums are exact and ties real
        peaks[j].push_back({double(k), double(j), v});
        values[j].push_back(v);
      }
    }
    const auto ref = oracle::exhaustive_assemblies(values);
    REQUIRE(ref.size() == 81);
    for (int beam : {500, 81, 20, 5, 1}) {
      const auto got = beam_assemble(peaks, beam);
      REQUIRE(got.size() == std::min<std::size_t>(beam, 81));
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].picks == ref[i].picks);
        CHECK(got[i].score == ref[i].score);
      }
    }
  }
}

TEST_CASE("enumerate_candidates") {
  const CandidateGenConfig cfg;
  auto maps = single_peak_maps();

  SUBCASE("one maximum per joint") {
    const auto c = enumerate_candidates(maps, cfg, "img", 2);
    REQUIRE(c.size() == 1);
    double sum = 0.0;
    for (const auto& m : maps) sum += local_maxima(m, cfg).front().value;
    CHECK(c[0].score == doctest::Approx(sum));
    CHECK(c[0].image_id == "img");
    CHECK(c[0].stage == 2);
  }

  SUBCASE("product rule and joint positions come from maxima") {
    bump(maps[4], 25.0, 25.0, 0.4);
    bump(maps[9], 28.0, 2.0, 0.3);
    const auto c = enumerate_candidates(maps, cfg);
    REQUIRE(c.size() == 4);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[0].score >= c[i].score);
    for (const auto& cand : c) {
      for (int j = 0; j < kNumJoints; ++j) {
        const auto peaks = local_maxima(maps[j], cfg);
        const bool found = std::any_of(peaks.begin(), peaks.end(), [&](const Peak& p) {
          return p.x == cand.skeleton.keypoints()(0, j) && p.y == cand.skeleton.keypoints()(1, j);
        });
        CHECK(found);
      }
    }
  }

  SUBCASE("a joint without maxima empties the result") {
    maps[3].grid.setZero();
    CHECK(enumerate_candidates(maps, cfg).empty());
  }

  SUBCASE("missing or duplicate maps") {
    auto missing = maps;
    missing.pop_back();
    CHECK_THROWS_AS(enumerate_candidates(missing, cfg), DataError);
    auto dup = maps;
    dup.back().joint = JointId::Head;
    CHECK_THROWS_AS(enumerate_candidates(dup, cfg), DataError);
  }
}

TEST_CASE("merge_stage_candidates") {
  const auto a = pose_at(10.0, 0.6, "img", 1);
  const auto a_later = pose_at(10.4, 0.9, "img", 2);

  const auto one = merge_stage_candidates({{a}, {a_later}});
  REQUIRE(one.size() == 1);
  CHECK(one[0].score == 0.9);
  CHECK(one[0].stage == 2);

  CHECK(merge_stage_candidates({}).empty());
  CHECK(merge_stage_candidates({{}, {}}).empty());

  std::vector<std::vector<CandidatePose>> stages;
  for (int s = 1; s <= 3; ++s) stages.push_back({pose_at(10.0 * s, 0.5, "img", s), pose_at(100.0 + 10.0 * s, 0.4, "img", s)});
  const auto six = merge_stage_candidates(stages);
  REQUIRE(six.size() == 6);
  CHECK(six[0].stage == 1);
  CHECK(six[5].stage == 3);

  // same pose on different images is not a duplicate
  CHECK(merge_stage_candidates({{a}, {pose_at(10.0, 0.5, "other", 2)}}).size() == 2);
}

TEST_CASE("heatmap binary round trip") {
  auto maps = single_peak_maps();
  maps[2].origin = {-3.5, 7.25};
  const std::string bytes = serialize_heatmaps(maps);
  CHECK(bytes.substr(0, 4) == "SPHM");
  const auto back = deserialize_heatmaps(bytes);
  REQUIRE(back.size() == maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    CHECK(back[i].joint == maps[i].joint);
    CHECK(back[i].stride == maps[i].stride);
    CHECK(back[i].origin == maps[i].origin);
    CHECK((back[i].grid - maps[i].grid.cast<float>().cast<double>()).abs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(deserialize_heatmaps(bytes.substr(0, bytes.size() - 2)), DataError);
  std::string bad = bytes;
  bad[1] = 'Q';
  CHECK_THROWS_AS(deserialize_heatmaps(bad), DataError);
  CHECK(deserialize_heatmaps("").empty());
}
