#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "selfpose/dpmm.hpp"

using namespace selfpose;

namespace {

FeatureMatrix column(const std::vector<double>& v) {
  FeatureMatrix X(Eigen::Index(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) X(Eigen::Index(i), 0) = v[i];
  return X;
}

double posterior_score(const FeatureMatrix& X, const Partition& p, const NigBase& base, double gamma) {
  return crp_log_prior(p, gamma) + partition_log_marginal(X, p, base);
}

// Two tight 1-D groups of `per_group` points at -10 and +10, then `extra`
// points near +200.
FeatureMatrix groups(int per_group, int extra, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  FeatureMatrix X(2 * per_group + extra, 1);
  for (int i = 0; i < per_group; ++i) X(i, 0) = -10.0 + n(rng);
  for (int i = 0; i < per_group; ++i) X(per_group + i, 0) = 10.0 + n(rng);
  for (int i = 0; i < extra; ++i) X(2 * per_group + i, 0) = 200.0 + n(rng);
  return X;
}

DpmmConfig raw_config(std::uint64_t seed = 0) {
  DpmmConfig cfg;
  cfg.seed = seed;
  cfg.pca_dim.reset();
  return cfg;
}

}  // namespace

TEST_CASE("partition relabels canonically") {
  const Partition p({3, 3, 1, 7, 1});
  CHECK(p.assignments() == std::vector<int>{0, 0, 1, 2, 1});
  CHECK(p.n_clusters() == 3);
  CHECK(p.sizes() == std::vector<std::size_t>{2, 2, 1});
  CHECK(p == Partition({0, 0, 5, 2, 5}));
}

TEST_CASE("CRP prior matches exact enumeration") {
  const std::vector<std::size_t> bell{1, 2, 5, 15, 52, 203, 877, 4140};
  for (double alpha : {1.0 / 3.0, 1.0, 2.5}) {
    for (int n = 1; n <= 8; ++n) {
      const auto parts = oracle::set_partitions(n);
      REQUIRE(parts.size() == bell[n - 1]);
      double z_lib = 0.0, z_ref = 0.0;
      for (const auto& z : parts) {
        z_lib += std::exp(crp_log_prior(Partition(z), alpha));
        z_ref += oracle::urn_mass(z, alpha);
      }
      // The Polya-urn normalizer is the rising factorial alpha^(n).
      double rising = 1.0;
      for (int i = 0; i < n; ++i) rising *= alpha + i;
      CHECK(z_ref == doctest::Approx(rising).epsilon(1e-12));
      double worst = 0.0;
      for (const auto& z : parts) {
        const double p_lib = std::exp(crp_log_prior(Partition(z), alpha)) / z_lib;
        worst = std::max(worst, std::abs(p_lib - oracle::urn_mass(z, alpha) / z_ref));
      }
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("CRP prior small cases") {
  const auto norm = [](const std::vector<int>& target, int n, double alpha) {
    double z = 0.0;
    for (const auto& p : oracle::set_partitions(n)) z += std::exp(crp_log_prior(Partition(p), alpha));
    return std::exp(crp_log_prior(Partition(target), alpha)) / z;
  };
  CHECK(norm({0, 1, 2}, 3, 1.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(norm({0, 0}, 2, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(norm({0, 1}, 2, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(crp_log_prior(Partition({0}), 0.3) == doctest::Approx(std::log(0.3)));
}

TEST_CASE("cluster marginal against quadrature") {
  const std::vector<double> pts{0.3, -1.2, 2.1, 0.45, 1.0};
  for (const NigBase base : {NigBase{0.0, 1.0, 1.0, 1.0}, NigBase{0.5, 0.7, 1.5, 0.8}, NigBase{-1.0, 0.1, 1.0, 2.0}}) {
    for (int k = 1; k <= 5; ++k) {
      const std::vector<double> x(pts.begin(), pts.begin() + k);
      const double ref = oracle::nig_marginal_quadrature(x, {base.mu0, base.kappa0, base.a0, base.b0});
      CHECK(std::abs(cluster_log_marginal(column(x), base) - ref) <= 1e-6);
    }
  }
  // one point under the unit base is a Student-t with 2 dof and scale^2 2
  CHECK(cluster_log_marginal(column({0.0}), NigBase{}) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(cluster_log_marginal(FeatureMatrix(0, 3), NigBase{}) == 0.0);
}

TEST_CASE("cluster marginal structure") {
  const NigBase base{0.2, 0.5, 2.0, 1.5};
  FeatureMatrix X(6, 2);
  X << 0.1, 3.0, -0.4, 2.2, 1.3, 2.9, 0.8, 3.5, -1.1, 1.7, 0.0, 2.4;
  SUBCASE("dimensions add") {
    CHECK(cluster_log_marginal(X, base) ==
          doctest::Approx(cluster_log_marginal(X.col(0), base) + cluster_log_marginal(X.col(1), base))
              .epsilon(1e-12));
  }
  SUBCASE("exchangeable") {
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 10; ++t) {
      std::shuffle(perm.begin(), perm.end(), rng);
      FeatureMatrix Y(6, 2);
      for (int i = 0; i < 6; ++i) Y.row(i) = X.row(perm[i]);
      CHECK(std::abs(cluster_log_marginal(Y, base) - cluster_log_marginal(X, base)) <= 1e-10);
    }
  }
  SUBCASE("running statistics agree") {
    NigStats s(2);
    for (int i = 0; i < 5; ++i) s.add(X.row(i).transpose().array());
    CHECK(s.log_marginal(base) == doctest::Approx(cluster_log_marginal(X.topRows(5), base)).epsilon(1e-10));
    CHECK(s.log_marginal_with(X.row(5).transpose().array(), base) ==
          doctest::Approx(cluster_log_marginal(X, base)).epsilon(1e-10));
  }
  SUBCASE("partition marginal decomposes") {
    const Partition a({0, 0, 1, 1, 2, 2}), b({0, 0, 1, 1, 1, 1});
    const double pa = partition_log_marginal(X, a, base), pb = partition_log_marginal(X, b, base);
    const double merged_terms = cluster_log_marginal(X.middleRows(2, 4), base);
    const double split_terms = cluster_log_marginal(X.middleRows(2, 2), base) +
                               cluster_log_marginal(X.middleRows(4, 2), base);
    CHECK(pb - pa == doctest::Approx(merged_terms - split_terms).epsilon(1e-10));
    CHECK(log_bayes_factor(X, a, b, base) == doctest::Approx(-log_bayes_factor(X, b, a, base)));
  }
}

TEST_CASE("Gibbs frequencies match the exact posterior on five points") {
  const FeatureMatrix X = column({-1.0, -0.7, 0.6, 1.0, 2.5});
  const NigBase base{0.0, 1.0, 1.0, 1.0};
  std::map<std::vector<int>, double> exact;
  double z = 0.0;
  for (const auto& p : oracle::set_partitions(5)) {
    const double w = std::exp(posterior_score(X, Partition(p), base, 1.0));
    exact[p] = w;
    z += w;
  }
  REQUIRE(exact.size() == 52);
  CrpGibbsSampler sampler(X, base, 1.0, 17);
  for (int i = 0; i < 500; ++i) sampler.sweep();
  std::map<std::vector<int>, double> freq;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    sampler.sweep();
    freq[sampler.partition().assignments()] += 1.0 / n;
  }
  double tv = 0.0;
  for (const auto& [p, w] : exact) tv += std::abs(w / z - freq[p]);
  CHECK(0.5 * tv <= 0.05);
}

TEST_CASE("gibbs_cluster") {
  const FeatureMatrix X = groups(20, 0, 4);
  DpmmConfig cfg = raw_config(9);
  cfg.gibbs_iters = 300;
  cfg.burn_in = 100;

  SUBCASE("recovers two separated groups") {
    const Partition p = gibbs_cluster(X, cfg);
    REQUIRE(p.n_clusters() == 2);
    std::vector<int> truth(40, 0);
    std::fill(truth.begin() + 20, truth.end(), 1);
    CHECK(p == Partition(truth));
    // no single move of a point to another or a new cluster scores higher
    const NigBase base = data_scaled_base(X);
    const double best = posterior_score(X, p, base, cfg.gamma);
    for (int i = 0; i < 40; ++i) {
      for (int k = 0; k <= p.n_clusters(); ++k) {
        std::vector<int> z = p.assignments();
        if (z[i] == k) continue;
        z[i] = k;
        CHECK(posterior_score(X, Partition(z), base, cfg.gamma) <= best);
      }
    }
    std::vector<int> one(40, 0);
    CHECK(posterior_score(X, Partition(one), base, cfg.gamma) < best);
  }

  SUBCASE("deterministic for a seed") { CHECK(gibbs_cluster(X, cfg) == gibbs_cluster(X, cfg)); }

  SUBCASE("returned partition beats every retained sample") {
    const FeatureMatrix Y = column({-2.0, -1.5, -1.9, 0.1, 0.4, 2.2, 2.0, 5.0});
    DpmmConfig c = raw_config(5);
    c.gibbs_iters = 200;
    c.burn_in = 50;
    const NigBase base = data_scaled_base(Y);
    const double best = posterior_score(Y, gibbs_cluster(Y, c), base, c.gamma);
    CrpGibbsSampler replay(Y, base, c.gamma, c.seed);
    for (int it = 0; it < c.gibbs_iters; ++it) {
      replay.sweep();
      if (it >= c.burn_in) CHECK(posterior_score(Y, replay.partition(), base, c.gamma) <= best + 1e-9);
    }
  }
}

TEST_CASE("PCA projection") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);

  SUBCASE("exact subspace") {
    // 30 points in a 2-D affine plane inside 5-D.
    Eigen::MatrixXd basis(2, 5);
    for (int i = 0; i < 10; ++i) basis(i % 2, i / 2) = n(rng);
    Eigen::RowVectorXd offset(5);
    for (int i = 0; i < 5; ++i) offset(i) = n(rng);
    FeatureMatrix X(30, 5);
    for (int r = 0; r < 30; ++r) X.row(r) = n(rng) * basis.row(0) + n(rng) * basis.row(1) + offset;
    const auto [Y, proj] = project(X, 2);
    const FeatureMatrix back = (Y * proj.basis.transpose()).rowwise() + proj.mean;
    CHECK((back - X).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((proj.basis.transpose() * proj.basis - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-10);
  }

  SUBCASE("full dimension is an isometry") {
    FeatureMatrix X(12, 4);
    for (int i = 0; i < 48; ++i) X(i / 4, i % 4) = n(rng);
    const FeatureMatrix Y = project(X, 4).first;
    double worst = 0.0;
    for (int a = 0; a < 12; ++a) {
      for (int b = 0; b < 12; ++b) {
        worst = std::max(worst, std::abs((X.row(a) - X.row(b)).norm() - (Y.row(a) - Y.row(b)).norm()));
      }
    }
    CHECK(worst <= 1e-8);
  }

  SUBCASE("separation along one axis survives d = 1") {
    FeatureMatrix X(20, 3);
    for (int r = 0; r < 20; ++r) X.row(r) << (r < 10 ? -5.0 : 5.0) + 0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng);
    const FeatureMatrix Y = project(X, 1).first;
    for (int r = 1; r < 10; ++r) CHECK((Y(r, 0) > 0) == (Y(0, 0) > 0));
    for (int r = 10; r < 20; ++r) CHECK((Y(r, 0) > 0) != (Y(0, 0) > 0));
  }

  CHECK_THROWS_AS(project(FeatureMatrix::Ones(1, 3), 1), std::invalid_argument);
  CHECK_THROWS_AS(project(FeatureMatrix::Ones(5, 3), 4), std::invalid_argument);
}

TEST_CASE("merge_set enumerates subsets of small clusters") {
  // sizes: 5, 5, 1, 2, 3 with small_max 3
  std::vector<int> z;
  for (int k : {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 3, 3, 4, 4, 4}) z.push_back(k);
  FeatureMatrix X(16, 1);
  for (int i = 0; i < 16; ++i) X(i, 0) = z[i] == 0 ? 0.0 : z[i] == 1 ? 10.0 : z[i] == 2 ? 1.0 : z[i] == 3 ? 9.0 : 8.0;
  const Partition p(z);
  const auto merges = merge_set(p, 3, X);
  CHECK(merges.size() == 7);
  for (const auto& m : merges) {
    for (const auto& [s, t] : m.merges) CHECK(t == (s == 2 ? 0 : 1));
  }
  CHECK(merge_set(p, 0, X).empty());

  const Partition one_small({0, 0, 0, 0, 1, 1, 1, 1, 2});
  FeatureMatrix Y(9, 1);
  Y << 0, 0, 0, 0, 10, 10, 10, 10, 7;
  const auto single = merge_set(one_small, 3, Y);
  REQUIRE(single.size() == 1);
  CHECK(single[0].merges == std::vector<std::pair<int, int>>{{2, 1}});
  CHECK(single[0].partition.n_clusters() == 2);
  CHECK(single[0].describe() == "2->1");
}

TEST_CASE("merge_set caps the number of small clusters") {
  std::vector<int> z(20, 0);
  for (int k = 1; k <= 14; ++k) z.push_back(k);
  FeatureMatrix X(34, 1);
  for (int i = 0; i < 34; ++i) X(i, 0) = double(z[i]);
  CHECK(merge_set(Partition(z), 3, X).size() == (1u << kMaxMergeClusters) - 1);
}

TEST_CASE("detect_outliers") {
  DpmmConfig cfg = raw_config();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  SUBCASE("planted far points") {
    const FeatureMatrix X = groups(50, 2, 1);
    std::vector<int> z(102, 0);
    std::fill(z.begin() + 50, z.begin() + 100, 1);
    z[100] = z[101] = 2;
    std::vector<double> scores(102);
    for (double& s : scores) s = u(rng);
    const auto r = detect_outliers(X, scores, Partition(z), cfg);
    CHECK(r.accepted);
    CHECK(r.outlier_indices == std::vector<std::size_t>{100, 101});
    REQUIRE(r.per_merge.size() == 1);
    // both sides evaluated directly
    const NigBase base = data_scaled_base(X);
    std::vector<int> merged = z;
    merged[100] = merged[101] = 1;
    CHECK(r.per_merge[0].log_bayes_factor ==
          doctest::Approx(partition_log_marginal(X, Partition(z), base) -
                          partition_log_marginal(X, Partition(merged), base)));
    CHECK(r.per_merge[0].log_bayes_factor > r.per_merge[0].log_lower_bound);
  }

  SUBCASE("no small clusters") {
    const FeatureMatrix X = groups(10, 0, 2);
    std::vector<int> z(20, 0);
    std::fill(z.begin() + 10, z.end(), 1);
    const auto r = detect_outliers(X, std::vector<double>(20, 0.5), Partition(z), cfg);
    CHECK_FALSE(r.accepted);
    CHECK(r.outlier_indices.empty());
    CHECK(r.per_merge.empty());
  }

  SUBCASE("a fragment close to its parent is kept") {
    FeatureMatrix X = groups(50, 0, 5);
    X.conservativeResize(101, 1);
    X(100, 0) = 10.1;
    std::vector<int> z(101, 0);
    std::fill(z.begin() + 50, z.begin() + 100, 1);
    z[100] = 2;
    const auto r = detect_outliers(X, std::vector<double>(101, 0.8), Partition(z), cfg);
    CHECK_FALSE(r.accepted);
    CHECK(r.outlier_indices.empty());
  }
}

TEST_CASE("equal scores reduce the bound to counts") {
  const Partition initial({0, 0, 0, 0, 1, 1, 1, 2});
  const Partition merged({0, 0, 0, 0, 1, 1, 1, 1});
  const double alpha = 1.0 / 3.0;
  // every normalized score is 1, so weighted counts are plain counts
  const Eigen::VectorXd ones = normalize_scores(std::vector<double>(8, 0.42));
  CHECK(ones.isOnes());
  const double counts = -std::log(alpha) + std::lgamma(4.0) + std::lgamma(4.0) -
                        (std::lgamma(4.0) + std::lgamma(3.0) + std::lgamma(1.0));
  CHECK(log_lower_bound(initial, merged, ones, alpha) == doctest::Approx(counts).epsilon(1e-12));
  // identical scores below 1 scale every count by the same sqrt
  const Eigen::VectorXd quarter = Eigen::VectorXd::Constant(8, 0.25);
  const double scaled = -std::log(alpha) + std::lgamma(2.0) + std::lgamma(2.0) -
                        (std::lgamma(2.0) + std::lgamma(1.5) + std::lgamma(0.5));
  CHECK(log_lower_bound(initial, merged, quarter, alpha) == doctest::Approx(scaled).epsilon(1e-12));
}

TEST_CASE("smaller alpha never flags more") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    FeatureMatrix X = groups(30, 2, seed);
    X(60, 0) = 14.0 + 4.0 * seed;  // fragments at varying distance
    X(61, 0) = 14.5 + 4.0 * seed;
    std::vector<int> z(62, 0);
    std::fill(z.begin() + 30, z.begin() + 60, 1);
    z[60] = z[61] = 2;
    std::vector<double> scores(62);
    for (double& s : scores) s = u(rng);
    std::vector<std::size_t> prev;
    bool first = true;
    for (double alpha : {1.0, 1.0 / 3.0, 1e-3, 1e-8, 1e-30}) {
      DpmmConfig cfg = raw_config();
      cfg.alpha = alpha;
      const auto r = detect_outliers(X, scores, Partition(z), cfg);
      if (!first) CHECK(std::includes(prev.begin(), prev.end(), r.outlier_indices.begin(), r.outlier_indices.end()));
      prev = r.outlier_indices;
      first = false;
    }
  }
}

TEST_CASE("outlier report text") {
  const FeatureMatrix X = groups(10, 2, 7);
  std::vector<int> z(22, 0);
  std::fill(z.begin() + 10, z.begin() + 20, 1);
  z[20] = z[21] = 2;
  const auto r = detect_outliers(X, std::vector<double>(22, 1.0), Partition(z), raw_config());
  const std::string text = format_outlier_report(r);
  CHECK(text.rfind("# clusters=3 accepted=1 outliers=2\n", 0) == 0);
  CHECK(text.find("2->1\t") != std::string::npos);
  CHECK(text.find("satisfied") != std::string::npos);
}

TEST_CASE("recover_poses") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 0.05);
  const auto make = [&](int count, double centre, const std::string& prefix) {
    std::vector<FeaturedCandidate> out;
    for (int i = 0; i < count; ++i) {
      FeaturedCandidate c;
      c.pose.image_id = prefix + std::to_string(i);
      c.pose.score = 0.5 + 0.01 * i;
      c.feature = Eigen::VectorXd::Constant(3, centre) + Eigen::Vector3d(n(rng), n(rng), n(rng));
      out.push_back(c);
    }
    return out;
  };
  DpmmConfig cfg;
  cfg.gibbs_iters = 200;
  cfg.burn_in = 50;

  SUBCASE("too few candidates") { CHECK(recover_poses(make(3, 0.0, "a"), cfg).empty()); }

  SUBCASE("one tight cluster keeps every image") {
    const auto c = make(12, 0.0, "img");
    CHECK(recover_poses(c, cfg).size() == 12);
  }

  SUBCASE("planted outliers are excluded, one pose per image") {
    auto c = make(100, 0.0, "img");
    auto second = make(100, 0.02, "img");  // a second candidate per image, lower score
    for (auto& s : second) s.pose.score -= 0.3;
    c.insert(c.end(), second.begin(), second.end());
    auto far = make(2, 40.0, "odd");
    c.insert(c.end(), far.begin(), far.end());
    const auto kept = recover_poses(c, cfg);
    CHECK(kept.size() == 100);
    for (const auto& p : kept) CHECK(p.image_id.rfind("img", 0) == 0);
    for (const auto& p : kept) CHECK(p.score >= 0.5);
  }
}
