#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "selfpose/cps_svm.hpp"

namespace selfpose {

// Feature sets are row matrices: one feature per row.
using FeatureMatrix = Eigen::MatrixXd;

// Cluster assignment z with contiguous ids 0..K-1, relabelled in order of
// first appearance so equal partitions compare equal.
class Partition {
 public:
  Partition() = default;
  explicit Partition(const std::vector<int>& assignments);

  const std::vector<int>& assignments() const { return z_; }
  int n_clusters() const { return static_cast<int>(members_.size()); }
  std::size_t n_points() const { return z_.size(); }
  const std::vector<std::vector<std::size_t>>& members() const { return members_; }
  std::size_t cluster_size(int k) const { return members_[k].size(); }
  std::vector<std::size_t> sizes() const;

  friend bool operator==(const Partition& a, const Partition& b) { return a.z_ == b.z_; }
  friend bool operator<(const Partition& a, const Partition& b) { return a.z_ < b.z_; }

 private:
  std::vector<int> z_;
  std::vector<std::vector<std::size_t>> members_;
};

// Normal-Inverse-Gamma base measure applied independently to each dimension:
//   sigma^2 ~ IG(a0, b0),  mu | sigma^2 ~ N(mu0, sigma^2 / kappa0).
template <typename Scalar>
struct BasicNigBase {
  Scalar mu0 = 0;
  Scalar kappa0 = 1;
  Scalar a0 = 1;
  Scalar b0 = 1;

  bool valid() const { return kappa0 > 0 && a0 > 0 && b0 > 0; }
};
using NigBase = BasicNigBase<double>;

// mu0 = grand mean, b0 = mean per-dimension variance (floored).
NigBase data_scaled_base(const FeatureMatrix& X, double kappa0 = 0.1, double a0 = 1.0);

// log of prod_k alpha * Gamma(N_k): the unnormalized Polya-urn prior mass.
double crp_log_prior(const Partition& p, double alpha);

// Closed-form log marginal likelihood of one cluster's rows with the mean and
// variance of every dimension integrated out under the base. Empty -> 0.
template <typename Derived>
typename Derived::Scalar cluster_log_marginal(const Eigen::MatrixBase<Derived>& members,
                                              const BasicNigBase<typename Derived::Scalar>& base) {
  using Scalar = typename Derived::Scalar;
  using Array = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
  const Eigen::Index n = members.rows();
  if (n == 0) return Scalar(0);
  using std::lgamma;
  using std::log;

  const Array mean = members.colwise().mean().array();
  const Array ss = (members.rowwise() - mean.matrix()).array().square().colwise().sum();
  const Scalar kn = base.kappa0 + Scalar(n);
  const Scalar an = base.a0 + Scalar(n) / 2;
  const Array bn = base.b0 + Scalar(0.5) * ss +
                   base.kappa0 * Scalar(n) * (mean - base.mu0).square() / (2 * kn);
  const Scalar d = Scalar(members.cols());
  const Scalar per_dim_const = lgamma(an) - lgamma(base.a0) + base.a0 * log(base.b0) +
                               Scalar(0.5) * (log(base.kappa0) - log(kn)) -
                               Scalar(0.5) * Scalar(n) * log(Scalar(2) * Scalar(EIGEN_PI));
  return d * per_dim_const - an * bn.log().sum();
}

// log p(X | z) = sum over clusters of cluster_log_marginal.
double partition_log_marginal(const FeatureMatrix& X, const Partition& p, const NigBase& base);

// Running sufficient statistics of one cluster for incremental updates.
class NigStats {
 public:
  explicit NigStats(Eigen::Index dim)
      : sum_(Eigen::ArrayXd::Zero(dim)), sumsq_(Eigen::ArrayXd::Zero(dim)) {}

  void add(const Eigen::ArrayXd& x) { ++n_; sum_ += x; sumsq_ += x.square(); }
  void remove(const Eigen::ArrayXd& x) { --n_; sum_ -= x; sumsq_ -= x.square(); }
  std::size_t count() const { return n_; }
  double log_marginal(const NigBase& base) const;
  // log marginal of this cluster with x added.
  double log_marginal_with(const Eigen::ArrayXd& x, const NigBase& base) const;

 private:
  static double evaluate(double n, const Eigen::ArrayXd& sum, const Eigen::ArrayXd& sumsq,
                         const NigBase& base);
  std::size_t n_ = 0;
  Eigen::ArrayXd sum_;
  Eigen::ArrayXd sumsq_;
};

// Collapsed Gibbs sampler over partitions under a DP(gamma, base) mixture
// (Chinese-restaurant conditionals). Stationary distribution:
//   p(z | X) ∝ gamma^K prod_k Gamma(N_k) p(X_k).
class CrpGibbsSampler {
 public:
  CrpGibbsSampler(FeatureMatrix X, const NigBase& base, double gamma, std::uint64_t seed);

  // One pass reassigning every point in index order.
  void sweep();
  Partition partition() const;
  // crp_log_prior(partition, gamma) + partition log marginal.
  double log_posterior() const;

 private:
  void assign(std::size_t i);
  void drop_if_empty(int k);

  FeatureMatrix X_;
  NigBase base_;
  double gamma_;
  std::mt19937_64 rng_;
  std::vector<int> z_;
  std::vector<NigStats> clusters_;
  std::vector<double> cluster_lml_;
};

struct DpmmConfig {
  double gamma = 1.0;        // DP concentration used by the sampler
  double alpha = 1.0 / 3.0;  // prior mass parameter of the outlier rule
  std::optional<NigBase> base;  // unset: data_scaled_base
  int gibbs_iters = 2000;
  int burn_in = 500;
  std::uint64_t seed = 0;
  std::optional<int> pca_dim = 8;
  int small_cluster_max = 3;

  // Throws std::invalid_argument.
  void validate() const;
};

struct PcaProjection {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd basis;  // dim x d, orthonormal columns

  FeatureMatrix apply(const FeatureMatrix& X) const {
    return (X.rowwise() - mean) * basis;
  }
};

// Mean-centred projection onto the top-d principal directions. Each basis
// vector's largest-magnitude entry is made positive.
std::pair<FeatureMatrix, PcaProjection> project(const FeatureMatrix& X, int d);

// MAP partition over post-burn-in sweeps.
Partition gibbs_cluster(const FeatureMatrix& X, const DpmmConfig& cfg);

struct MergedPartition {
  Partition partition;
  // (small cluster id, absorbing large cluster id), ids of the source partition
  std::vector<std::pair<int, int>> merges;
  std::string describe() const;
};

inline constexpr int kMaxMergeClusters = 12;

// Every non-empty subset of the small clusters (size <= small_max), each
// merged into its nearest large cluster by distance between means. At most
// kMaxMergeClusters small clusters are considered, smallest first.
std::vector<MergedPartition> merge_set(const Partition& p, int small_max, const FeatureMatrix& X);

// log K = log p(X | a) - log p(X | b).
double log_bayes_factor(const FeatureMatrix& X, const Partition& a, const Partition& b,
                        const NigBase& base);

// Min-max scaling into [0, 1]; a constant batch maps to all ones.
Eigen::VectorXd normalize_scores(std::span<const double> scores);

// Score-weighted cluster masses are floored here before log-gamma.
inline constexpr double kMinWeightedCount = 1e-6;

// Log of the right-hand side of the acceptance inequality, with every cluster
// count replaced by the sum of sqrt(normalized score) over its members:
//   -nu log alpha + sum_{k in m} lgamma(W_mk) - sum_{k in I} lgamma(W_Ik).
double log_lower_bound(const Partition& initial, const Partition& merged,
                       const Eigen::VectorXd& normalized_scores, double alpha);

struct MergeEvaluation {
  std::string descriptor;
  double log_bayes_factor = 0.0;
  double log_lower_bound = 0.0;
  bool satisfied = false;
};

struct OutlierReport {
  Partition initial;
  bool accepted = false;
  std::vector<std::size_t> outlier_indices;
  std::vector<MergeEvaluation> per_merge;
};

OutlierReport detect_outliers(const FeatureMatrix& X, std::span<const double> scores,
                              const Partition& p, const DpmmConfig& cfg);

// One line per merge partition: descriptor, log K, log bound, verdict.
std::string format_outlier_report(const OutlierReport& report);

struct RecoveryResult {
  std::vector<std::size_t> kept;  // indices into the input, one per image
  OutlierReport report;
};

// Candidates from one action: optional PCA, clustering, outlier test. Keeps
// members of large clusters, best-scoring per image. Fewer than 4 candidates
// yields nothing.
RecoveryResult recover_pose_indices(std::span<const FeaturedCandidate> candidates,
                                    const DpmmConfig& cfg);
std::vector<CandidatePose> recover_poses(std::span<const FeaturedCandidate> candidates,
                                         const DpmmConfig& cfg);

}  // namespace selfpose
