#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "selfpose/core.hpp"
#include "selfpose/pr_features.hpp"

namespace selfpose {

struct TrainSet {
  std::vector<Eigen::VectorXd> features;
  std::vector<int> labels;  // +1 / -1

  void add(Eigen::VectorXd x, int y) {
    features.push_back(std::move(x));
    labels.push_back(y);
  }
  std::size_t size() const { return labels.size(); }
};

// Linear decision function over standardized features:
//   f(x) = weights . ((x - mean) / scale) + bias
struct SvmModel {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  Eigen::VectorXd weights;
  double bias = 0.0;
  double reg = 1.0;

  Eigen::Index feature_dim() const { return weights.size(); }
  double decision(const Eigen::VectorXd& x) const;
  Eigen::VectorXd standardize(const Eigen::VectorXd& x) const;

  friend bool operator==(const SvmModel&, const SvmModel&) = default;
};

struct SvmParams {
  double reg = 1.0;  // C
  double tol = 1e-4;
  int max_iter = 0;  // epochs; 0 means 10 x |training set|
  bool standardize = true;
  std::uint64_t seed = 0;  // per-epoch visiting order
};

struct SvmTrace {
  std::vector<double> primal;  // per epoch, objective of the best iterate so far
  std::vector<double> dual;    // per epoch
  int epochs = 0;
  double gap = 0.0;
  bool converged = false;
};

// Dual coordinate descent on the L2-regularized hinge loss, with the bias as
// an extra constant-1 feature (so it is regularized alongside the weights):
//   min 1/2 (|w|^2 + b^2) + C sum_i max(0, 1 - y_i (w.x_i + b)).
// Returns the lowest-objective iterate; stops when its duality gap falls
// under tol * max(1, primal).
// Throws DataError("degenerate training set") unless both labels occur.
SvmModel train(const TrainSet& ts, const SvmParams& params = {}, SvmTrace* trace = nullptr);

// The objective above, evaluated for `model` on `ts` in standardized space.
double hinge_objective(const SvmModel& model, const TrainSet& ts);

// `n` jittered copies of `annotation`: every joint moves uniformly inside a disk
// whose radius is eps x the shortest limb touching it, so each copy passes PCP
// at eps against the annotation. Joints on a zero-length limb stay put.
std::vector<Skeleton> synthesize_positives(const Skeleton& annotation, double eps, int n,
                                           std::uint64_t seed);

// Every detection on a background image is a false positive. Throws
// DataError("non-background source") if a candidate comes from elsewhere.
std::vector<Skeleton> mine_negatives(std::span<const CandidatePose> background_candidates,
                                     std::span<const std::string> background_ids);

struct FeaturedCandidate {
  CandidatePose pose;
  Eigen::VectorXd feature;
};

// Index of the highest-scoring candidate whose decision value is strictly
// above `margin`, or nothing.
std::optional<std::size_t> select(const SvmModel& model,
                                  std::span<const FeaturedCandidate> candidates,
                                  double margin = 0.0);

// Versioned little-endian record.
std::string serialize_model(const SvmModel& model);
SvmModel deserialize_model(const std::string& bytes);
void save_model(const SvmModel& model, const std::string& path);
SvmModel load_model(const std::string& path);

}  // namespace selfpose
