#include "selfpose/cps_svm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "binary.hpp"
#include "selfpose/io.hpp"

namespace selfpose {

namespace {

constexpr char kModelMagic[8] = {'C', 'P', 'S', 'S', 'V', 'M', '\0', '\0'};
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

Eigen::VectorXd SvmModel::standardize(const Eigen::VectorXd& x) const {
  if (x.size() != feature_dim()) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.size()) +
                                " does not match model dimension " +
                                std::to_string(feature_dim()));
  }
  return ((x - mean).array() / scale.array()).matrix();
}

double SvmModel::decision(const Eigen::VectorXd& x) const {
  return weights.dot(standardize(x)) + bias;
}

SvmModel train(const TrainSet& ts, const SvmParams& params, SvmTrace* trace) {
  if (!(params.reg > 0.0) || !(params.tol > 0.0)) {
    throw std::invalid_argument("SVM regularization and tolerance must be positive");
  }
  const std::size_t n = ts.size();
  const bool has_pos = std::count(ts.labels.begin(), ts.labels.end(), 1) > 0;
  const bool has_neg = std::count(ts.labels.begin(), ts.labels.end(), -1) > 0;
  if (!has_pos || !has_neg || n != ts.features.size()) throw DataError("degenerate training set");
  const Eigen::Index d = ts.features.front().size();
  if (d == 0) throw DataError("degenerate training set");
  for (const auto& x : ts.features) {
    if (x.size() != d) throw DataError("inconsistent feature dimensions in training set");
  }

  SvmModel model;
  model.reg = params.reg;
  model.mean = Eigen::VectorXd::Zero(d);
  model.scale = Eigen::VectorXd::Ones(d);
  model.weights = Eigen::VectorXd::Zero(d);
  if (params.standardize) {
    for (const auto& x : ts.features) model.mean += x;
    model.mean /= double(n);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& x : ts.features) var += (x - model.mean).cwiseAbs2();
    var /= double(n);
    for (Eigen::Index k = 0; k < d; ++k) {
      model.scale(k) = var(k) > 1e-24 ? std::sqrt(var(k)) : 1.0;
    }
  }

  // Augmented rows [x_std, 1].
  Eigen::MatrixXd X(n, d + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    X.row(i).head(d) = model.standardize(ts.features[i]).transpose();
    X(i, d) = 1.0;
    y(i) = ts.labels[i] > 0 ? 1.0 : -1.0;
  }
  const Eigen::VectorXd qdiag = X.rowwise().squaredNorm();

  const double C = params.reg;
  const int max_epochs = params.max_iter > 0 ? params.max_iter : int(10 * n);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(params.seed);

  const auto primal = [&] {
    const Eigen::ArrayXd margins = y.array() * (X * w).array();
    return 0.5 * w.squaredNorm() + C * (1.0 - margins).max(0.0).sum();
  };

  // w = 0 is the starting iterate, with objective C * n.
  Eigen::VectorXd best_w = w;
  double best_primal = primal();
  SvmTrace local;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double g = y(i) * X.row(i).dot(w) - 1.0;
      double pg = g;
      if (alpha(i) <= 0.0) pg = std::min(g, 0.0);
      else if (alpha(i) >= C) pg = std::max(g, 0.0);
      if (std::abs(pg) <= 1e-14) continue;
      const double old = alpha(i);
      alpha(i) = std::clamp(old - g / qdiag(i), 0.0, C);
      w += (alpha(i) - old) * y(i) * X.row(i).transpose();
    }
    // Coordinate steps on the dual can raise the primal for an epoch; keep
    // the best iterate seen so the returned model's objective never rises.
    const double p = primal();
    if (p < best_primal) {
      best_primal = p;
      best_w = w;
    }
    const double dual = alpha.sum() - 0.5 * w.squaredNorm();
    local.primal.push_back(best_primal);
    local.dual.push_back(dual);
    local.epochs = epoch + 1;
    local.gap = best_primal - dual;
    if (local.gap <= params.tol * std::max(1.0, std::abs(best_primal))) {
      local.converged = true;
      break;
    }
  }

  model.weights = best_w.head(d);
  model.bias = best_w(d);
  if (trace != nullptr) *trace = std::move(local);
  return model;
}

double hinge_objective(const SvmModel& model, const TrainSet& ts) {
  double loss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    loss += std::max(0.0, 1.0 - ts.labels[i] * model.decision(ts.features[i]));
  }
  return 0.5 * (model.weights.squaredNorm() + model.bias * model.bias) + model.reg * loss;
}

std::vector<Skeleton> synthesize_positives(const Skeleton& annotation, double eps, int n,
                                           std::uint64_t seed) {
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must lie in (0, 1]");
  if (n < 1) throw std::invalid_argument("n must be at least 1");

  std::array<double, kNumJoints> radius;
  radius.fill(std::numeric_limits<double>::infinity());
  for (const Limb& limb : kLimbs) {
    const double len = annotation.limb_length(limb);
    radius[index(limb.a)] = std::min(radius[index(limb.a)], len);
    radius[index(limb.b)] = std::min(radius[index(limb.b)], len);
  }
  // Shrunk by a hair so rounding in the displaced coordinates cannot push a
  // joint across the PCP boundary.
  for (double& r : radius) r *= eps * (1.0 - 1e-9);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Skeleton> out;
  out.reserve(n);
  for (int s = 0; s < n; ++s) {
    Skeleton sk = annotation;
    for (int j = 0; j < kNumJoints; ++j) {
      const double rho = radius[j] * std::sqrt(unit(rng));
      const double phi = 2.0 * std::numbers::pi * unit(rng);
      if (radius[j] <= 0.0) continue;
      sk.keypoints()(0, j) += rho * std::cos(phi);
      sk.keypoints()(1, j) += rho * std::sin(phi);
    }
    out.push_back(sk);
  }
  return out;
}

std::vector<Skeleton> mine_negatives(std::span<const CandidatePose> background_candidates,
                                     std::span<const std::string> background_ids) {
  const std::set<std::string> bg(background_ids.begin(), background_ids.end());
  std::vector<Skeleton> out;
  out.reserve(background_candidates.size());
  for (const auto& c : background_candidates) {
    if (!bg.contains(c.image_id)) {
      throw DataError("non-background source: '" + c.image_id + "'");
    }
    out.push_back(c.skeleton);
  }
  return out;
}

std::optional<std::size_t> select(const SvmModel& model,
                                  std::span<const FeaturedCandidate> candidates, double margin) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!(model.decision(candidates[i].feature) > margin)) continue;
    if (!best || candidates[i].pose.score > candidates[*best].pose.score) best = i;
  }
  return best;
}

std::string serialize_model(const SvmModel& model) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kModelMagic, sizeof kModelMagic));
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(model.feature_dim()));
  w.put<double>(model.reg);
  w.put_vector(model.mean);
  w.put_vector(model.scale);
  w.put_vector(model.weights);
  w.put<double>(model.bias);
  return w.take();
}

SvmModel deserialize_model(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.get_bytes(sizeof kModelMagic) != std::string_view(kModelMagic, sizeof kModelMagic)) {
    throw DataError("not an SVM model record");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kModelVersion) {
    throw DataError("unsupported SVM model version " + std::to_string(v));
  }
  const auto d = r.get<std::uint64_t>();
  if (d == 0 || d > (r.remaining() / sizeof(double))) throw DataError("corrupt SVM model record");
  SvmModel m;
  m.reg = r.get<double>();
  m.mean = r.get_vector(Eigen::Index(d));
  m.scale = r.get_vector(Eigen::Index(d));
  m.weights = r.get_vector(Eigen::Index(d));
  m.bias = r.get<double>();
  if (r.remaining() != 0) throw DataError("trailing bytes after SVM model record");
  if (!m.weights.allFinite()) throw DataError("non-finite SVM weights");
  return m;
}

void save_model(const SvmModel& model, const std::string& path) {
  write_file_atomic(path, serialize_model(model));
}

SvmModel load_model(const std::string& path) { return deserialize_model(read_file(path)); }

}  // namespace selfpose
