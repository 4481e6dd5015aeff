#include "selfpose/dpmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace selfpose {

// ---------------------------------------------------------------- Partition

Partition::Partition(const std::vector<int>& assignments) : z_(assignments.size()) {
  std::map<int, int> relabel;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto [it, inserted] = relabel.try_emplace(assignments[i], static_cast<int>(relabel.size()));
    z_[i] = it->second;
    if (inserted) members_.emplace_back();
    members_[it->second].push_back(i);
  }
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.size());
  return out;
}

// ------------------------------------------------------------ marginals

NigBase data_scaled_base(const FeatureMatrix& X, double kappa0, double a0) {
  NigBase base;
  base.kappa0 = kappa0;
  base.a0 = a0;
  if (X.size() == 0) return base;
  base.mu0 = X.mean();
  double var = 0.0;
  if (X.rows() > 1) {
    const Eigen::RowVectorXd mean = X.colwise().mean();
    var = (X.rowwise() - mean).array().square().colwise().sum().mean() / double(X.rows() - 1);
  }
  base.b0 = std::max(var, 1e-12);
  return base;
}

double crp_log_prior(const Partition& p, double alpha) {
  double acc = 0.0;
  const double log_alpha = std::log(alpha);
  for (std::size_t n : p.sizes()) acc += log_alpha + std::lgamma(double(n));
  return acc;
}

namespace {

FeatureMatrix gather_rows(const FeatureMatrix& X, const std::vector<std::size_t>& rows) {
  FeatureMatrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(Eigen::Index(r)) = X.row(Eigen::Index(rows[r]));
  return out;
}

}  // namespace

double partition_log_marginal(const FeatureMatrix& X, const Partition& p, const NigBase& base) {
  double acc = 0.0;
  for (const auto& m : p.members()) acc += cluster_log_marginal(gather_rows(X, m), base);
  return acc;
}

double NigStats::evaluate(double n, const Eigen::ArrayXd& sum, const Eigen::ArrayXd& sumsq,
                          const NigBase& base) {
  if (n <= 0.0) return 0.0;
  const Eigen::ArrayXd mean = sum / n;
  const Eigen::ArrayXd ss = (sumsq - n * mean.square()).max(0.0);
  const double kn = base.kappa0 + n;
  const double an = base.a0 + 0.5 * n;
  const Eigen::ArrayXd bn =
      base.b0 + 0.5 * ss + base.kappa0 * n * (mean - base.mu0).square() / (2.0 * kn);
  const double per_dim = std::lgamma(an) - std::lgamma(base.a0) + base.a0 * std::log(base.b0) +
                         0.5 * (std::log(base.kappa0) - std::log(kn)) -
                         0.5 * n * std::log(2.0 * EIGEN_PI);
  return double(sum.size()) * per_dim - an * bn.log().sum();
}

double NigStats::log_marginal(const NigBase& base) const {
  return evaluate(double(n_), sum_, sumsq_, base);
}

double NigStats::log_marginal_with(const Eigen::ArrayXd& x, const NigBase& base) const {
  return evaluate(double(n_ + 1), sum_ + x, sumsq_ + x.square(), base);
}

// ------------------------------------------------------------ Gibbs

CrpGibbsSampler::CrpGibbsSampler(FeatureMatrix X, const NigBase& base, double gamma,
                                 std::uint64_t seed)
    : X_(std::move(X)), base_(base), gamma_(gamma), rng_(seed), z_(X_.rows(), -1) {
  if (!base_.valid()) throw std::invalid_argument("invalid NIG base");
  if (!(gamma_ > 0.0)) throw std::invalid_argument("DP concentration must be positive");
  // Sequential seating from the collapsed conditionals.
  for (std::size_t i = 0; i < z_.size(); ++i) assign(i);
}

void CrpGibbsSampler::assign(std::size_t i) {
  const Eigen::ArrayXd x = X_.row(Eigen::Index(i)).transpose().array();
  const std::size_t K = clusters_.size();
  std::vector<double> logw(K + 1);
  for (std::size_t k = 0; k < K; ++k) {
    logw[k] = std::log(double(clusters_[k].count())) +
              clusters_[k].log_marginal_with(x, base_) - cluster_lml_[k];
  }
  NigStats fresh(X_.cols());
  logw[K] = std::log(gamma_) + fresh.log_marginal_with(x, base_);

  const double top = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& w : logw) {
    w = std::exp(w - top);
    total += w;
  }
  std::uniform_real_distribution<double> unit(0.0, total);
  double u = unit(rng_);
  std::size_t pick = K;
  for (std::size_t k = 0; k <= K; ++k) {
    if (u < logw[k]) {
      pick = k;
      break;
    }
    u -= logw[k];
  }
  if (pick == K) {
    clusters_.push_back(std::move(fresh));
    cluster_lml_.push_back(0.0);
  }
  clusters_[pick].add(x);
  cluster_lml_[pick] = clusters_[pick].log_marginal(base_);
  z_[i] = static_cast<int>(pick);
}

void CrpGibbsSampler::drop_if_empty(int k) {
  if (clusters_[k].count() != 0) return;
  const int last = static_cast<int>(clusters_.size()) - 1;
  if (k != last) {
    std::swap(clusters_[k], clusters_[last]);
    std::swap(cluster_lml_[k], cluster_lml_[last]);
    for (int& zi : z_) {
      if (zi == last) zi = k;
    }
  }
  clusters_.pop_back();
  cluster_lml_.pop_back();
}

void CrpGibbsSampler::sweep() {
  for (std::size_t i = 0; i < z_.size(); ++i) {
    const int k = z_[i];
    clusters_[k].remove(X_.row(Eigen::Index(i)).transpose().array());
    cluster_lml_[k] = clusters_[k].log_marginal(base_);
    z_[i] = -1;
    drop_if_empty(k);
    assign(i);
  }
}

Partition CrpGibbsSampler::partition() const { return Partition(z_); }

double CrpGibbsSampler::log_posterior() const {
  double acc = 0.0;
  const double log_gamma = std::log(gamma_);
  for (std::size_t k = 0; k < clusters_.size(); ++k) {
    acc += log_gamma + std::lgamma(double(clusters_[k].count())) + cluster_lml_[k];
  }
  return acc;
}

void DpmmConfig::validate() const {
  if (!(gamma > 0.0) || !(alpha > 0.0)) throw std::invalid_argument("gamma and alpha must be positive");
  if (base && !base->valid()) throw std::invalid_argument("invalid NIG base");
  if (gibbs_iters < 1 || burn_in < 0 || burn_in >= gibbs_iters) {
    throw std::invalid_argument("burn_in must be smaller than gibbs_iters");
  }
  if (small_cluster_max < 1) throw std::invalid_argument("small_cluster_max must be at least 1");
  if (pca_dim && *pca_dim < 1) throw std::invalid_argument("pca_dim must be positive");
}

Partition gibbs_cluster(const FeatureMatrix& X, const DpmmConfig& cfg) {
  cfg.validate();
  if (X.rows() < 2) throw std::invalid_argument("clustering needs at least 2 features");
  const NigBase base = cfg.base ? *cfg.base : data_scaled_base(X);
  CrpGibbsSampler sampler(X, base, cfg.gamma, cfg.seed);
  Partition best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.gibbs_iters; ++it) {
    sampler.sweep();
    if (it < cfg.burn_in) continue;
    const double score = sampler.log_posterior();
    if (score > best_score) {
      best_score = score;
      best = sampler.partition();
    }
  }
  return best;
}

// ------------------------------------------------------------ PCA

std::pair<FeatureMatrix, PcaProjection> project(const FeatureMatrix& X, int d) {
  if (X.rows() < 2) throw std::invalid_argument("projection needs at least 2 features");
  if (d < 1 || d > std::min(X.cols(), X.rows())) {
    throw std::invalid_argument("projection dimension exceeds min(dim, count)");
  }
  PcaProjection proj;
  proj.mean = X.colwise().mean();
  const FeatureMatrix centered = X.rowwise() - proj.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  proj.basis = svd.matrixV().leftCols(d);
  for (int c = 0; c < d; ++c) {
    Eigen::Index arg;
    proj.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (proj.basis(arg, c) < 0) proj.basis.col(c) *= -1.0;
  }
  return {proj.apply(X), std::move(proj)};
}

// ------------------------------------------------------------ merges

std::string MergedPartition::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < merges.size(); ++i) {
    if (i) os << ',';
    os << merges[i].first << "->" << merges[i].second;
  }
  return os.str();
}

std::vector<MergedPartition> merge_set(const Partition& p, int small_max, const FeatureMatrix& X) {
  std::vector<int> small, large;
  for (int k = 0; k < p.n_clusters(); ++k) {
    (p.cluster_size(k) <= std::size_t(small_max) ? small : large).push_back(k);
  }
  if (small.empty() || large.empty()) return {};

  std::stable_sort(small.begin(), small.end(),
                   [&](int a, int b) { return p.cluster_size(a) < p.cluster_size(b); });
  if (small.size() > std::size_t(kMaxMergeClusters)) small.resize(kMaxMergeClusters);

  std::vector<Eigen::RowVectorXd> means(p.n_clusters());
  for (int k = 0; k < p.n_clusters(); ++k) means[k] = gather_rows(X, p.members()[k]).colwise().mean();

  std::vector<int> target(small.size());
  for (std::size_t s = 0; s < small.size(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int k : large) {
      const double dist = (means[small[s]] - means[k]).squaredNorm();
      if (dist < best) {
        best = dist;
        target[s] = k;
      }
    }
  }

  std::vector<MergedPartition> out;
  const std::uint32_t n_subsets = (1u << small.size()) - 1u;
  out.reserve(n_subsets);
  for (std::uint32_t mask = 1; mask <= n_subsets; ++mask) {
    std::vector<int> z = p.assignments();
    MergedPartition mp;
    for (std::size_t s = 0; s < small.size(); ++s) {
      if (!(mask & (1u << s))) continue;
      for (std::size_t i : p.members()[small[s]]) z[i] = target[s];
      mp.merges.emplace_back(small[s], target[s]);
    }
    mp.partition = Partition(z);
    out.push_back(std::move(mp));
  }
  return out;
}

// ------------------------------------------------------------ outliers

double log_bayes_factor(const FeatureMatrix& X, const Partition& a, const Partition& b,
                        const NigBase& base) {
  return partition_log_marginal(X, a, base) - partition_log_marginal(X, b, base);
}

Eigen::VectorXd normalize_scores(std::span<const double> scores) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(scores.size()));
  if (scores.empty()) return out;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out(Eigen::Index(i)) = range > 0.0 ? (scores[i] - *lo) / range : 1.0;
  }
  return out;
}

namespace {

double weighted_lgamma_sum(const Partition& p, const Eigen::VectorXd& root_scores) {
  double acc = 0.0;
  for (const auto& m : p.members()) {
    double w = 0.0;
    for (std::size_t i : m) w += root_scores(Eigen::Index(i));
    acc += std::lgamma(std::max(w, kMinWeightedCount));
  }
  return acc;
}

}  // namespace

double log_lower_bound(const Partition& initial, const Partition& merged,
                       const Eigen::VectorXd& normalized_scores, double alpha) {
  const Eigen::VectorXd root = normalized_scores.cwiseMax(0.0).cwiseSqrt();
  const int nu = initial.n_clusters() - merged.n_clusters();
  return -double(nu) * std::log(alpha) + weighted_lgamma_sum(merged, root) -
         weighted_lgamma_sum(initial, root);
}

OutlierReport detect_outliers(const FeatureMatrix& X, std::span<const double> scores,
                              const Partition& p, const DpmmConfig& cfg) {
  if (scores.size() != std::size_t(X.rows()) || p.n_points() != std::size_t(X.rows())) {
    throw std::invalid_argument("detect_outliers: features, scores and partition disagree in size");
  }
  OutlierReport report;
  report.initial = p;
  const auto merges = merge_set(p, cfg.small_cluster_max, X);
  if (merges.empty()) return report;

  const NigBase base = cfg.base ? *cfg.base : data_scaled_base(X);
  const Eigen::VectorXd tbar = normalize_scores(scores);
  const double log_initial = partition_log_marginal(X, p, base);

  bool all = true;
  for (const auto& m : merges) {
    MergeEvaluation ev;
    ev.descriptor = m.describe();
    ev.log_bayes_factor = log_initial - partition_log_marginal(X, m.partition, base);
    ev.log_lower_bound = log_lower_bound(p, m.partition, tbar, cfg.alpha);
    ev.satisfied = ev.log_bayes_factor > ev.log_lower_bound;
    all = all && ev.satisfied;
    report.per_merge.push_back(std::move(ev));
  }
  report.accepted = all;
  if (all) {
    for (int k = 0; k < p.n_clusters(); ++k) {
      if (p.cluster_size(k) <= std::size_t(cfg.small_cluster_max)) {
        const auto& m = p.members()[k];
        report.outlier_indices.insert(report.outlier_indices.end(), m.begin(), m.end());
      }
    }
    std::sort(report.outlier_indices.begin(), report.outlier_indices.end());
  }
  return report;
}

std::string format_outlier_report(const OutlierReport& report) {
  std::ostringstream os;
  os.precision(12);
  os << "# clusters=" << report.initial.n_clusters() << " accepted=" << (report.accepted ? 1 : 0)
     << " outliers=" << report.outlier_indices.size() << '\n';
  for (const auto& ev : report.per_merge) {
    os << ev.descriptor << '\t' << ev.log_bayes_factor << '\t' << ev.log_lower_bound << '\t'
       << (ev.satisfied ? "satisfied" : "violated") << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------ recovery

RecoveryResult recover_pose_indices(std::span<const FeaturedCandidate> candidates,
                                    const DpmmConfig& cfg) {
  RecoveryResult result;
  if (candidates.size() < 4) return result;

  const Eigen::Index dim = candidates.front().feature.size();
  FeatureMatrix X(static_cast<Eigen::Index>(candidates.size()), dim);
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].feature.size() != dim) throw DataError("inconsistent feature dimensions");
    X.row(Eigen::Index(i)) = candidates[i].feature.transpose();
    scores[i] = candidates[i].pose.score;
  }
  if (cfg.pca_dim) {
    const int d = static_cast<int>(std::min<Eigen::Index>({*cfg.pca_dim, X.cols(), X.rows()}));
    X = project(X, d).first;
  }

  const Partition z = gibbs_cluster(X, cfg);
  result.report = detect_outliers(X, scores, z, cfg);

  // Large-cluster members survive whether or not the small clusters were
  // confirmed as outliers.
  std::map<std::string, std::size_t> best;
  for (int k = 0; k < z.n_clusters(); ++k) {
    if (z.cluster_size(k) <= std::size_t(cfg.small_cluster_max)) continue;
    for (std::size_t i : z.members()[k]) {
      const auto& id = candidates[i].pose.image_id;
      auto it = best.find(id);
      if (it == best.end()) best.emplace(id, i);
      else if (candidates[i].pose.score > candidates[it->second].pose.score) it->second = i;
    }
  }
  for (const auto& [id, i] : best) result.kept.push_back(i);
  std::sort(result.kept.begin(), result.kept.end());
  return result;
}

std::vector<CandidatePose> recover_poses(std::span<const FeaturedCandidate> candidates,
                                         const DpmmConfig& cfg) {
  std::vector<CandidatePose> out;
  for (std::size_t i : recover_pose_indices(candidates, cfg).kept) out.push_back(candidates[i].pose);
  return out;
}

}  // namespace selfpose
