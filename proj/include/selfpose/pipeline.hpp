#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selfpose/candidates.hpp"
#include "selfpose/cps_svm.hpp"
#include "selfpose/dpmm.hpp"
#include "selfpose/io.hpp"
#include "selfpose/metrics.hpp"

namespace selfpose {

enum class Scheme { Semi, Weak, WeakC };
std::string_view scheme_name(Scheme s);
Scheme parse_scheme(std::string_view s);  // throws std::invalid_argument

struct AcceptedPose {
  std::string image_id;
  Skeleton skeleton;
  std::optional<ActionLabel> action;
  Provenance provenance = Provenance::Svm;
  double score = 0.0;
  int iteration = 0;  // first accepted in
};

struct IterationState {
  int iteration = 0;
  std::vector<AcceptedPose> accepted;  // append-only across a run
  SvmModel general_model;
  std::map<ActionLabel, SvmModel> per_action_models;
  std::vector<MetricsReport> reports;  // one per finished iteration
  std::vector<std::string> outlier_audit;  // per-action outlier reports, last iteration

  bool has_image(const std::string& id) const;
};

struct PipelineConfig {
  Scheme scheme = Scheme::WeakC;
  int max_iterations = 2;
  double eps = 0.7;       // positive synthesis radius (PCP units)
  double eval_eps = 0.5;  // PCP threshold for counting true positives
  double pck_frac = 0.2;
  SvmParams svm;
  double margin = 0.0;
  int positives_per_annotation = 10;
  int negatives_per_background = 20;  // strongest detections mined per background
  int min_action_annotations = 5;
  DpmmConfig dpmm;
  int cluster_top_n = 3;  // candidates per SVM-rejected image entering the clustering
  CandidateGenConfig candidates;
  std::string exchange_dir;  // empty: no files are written
  std::uint64_t seed = 0;

  void validate() const;
  // Overrides fields from keys such as "scheme", "svm.reg", "dpmm.alpha".
  void apply(const KeyValueConfig& kv);
};

// Candidate poses per image id.
using CandidateMap = std::map<std::string, std::vector<CandidatePose>>;

// Positives (annotations plus synthesized copies) tagged with their action,
// followed by negatives mined from backgrounds (no action).
struct SelectorTrainingData {
  TrainSet set;
  std::vector<std::optional<ActionLabel>> sample_action;
};

SelectorTrainingData build_training_data(const DatasetSplit& split, const CandidateMap& background,
                                         const PipelineConfig& cfg);

// One general model over every positive, then a model per action retrained on
// that action's positives plus the shared negatives. "general" and actions
// with fewer than min_action_annotations FS images use the general model.
struct SpecializedModels {
  SvmModel general;
  std::map<ActionLabel, SvmModel> per_action;
};
SpecializedModels specialize_models(const SelectorTrainingData& data, const DatasetSplit& split,
                                    const PipelineConfig& cfg);

Eigen::VectorXd pipeline_feature(const Skeleton& s);

// Evaluation-only truth per image id.
using GroundTruth = std::map<std::string, Skeleton>;

IterationState initial_state(const DatasetSplit& split, const CandidateMap& candidates,
                             const PipelineConfig& cfg);

IterationState run_iteration(const IterationState& state, const DatasetSplit& split,
                             const CandidateMap& candidates_in, const PipelineConfig& cfg,
                             const GroundTruth* truth = nullptr);

bool stop_check(const IterationState& prev, const IterationState& cur, const PipelineConfig& cfg);

// Supplies the candidates for iteration t (1-based) given the previous ones.
using CandidateSource = std::function<CandidateMap(int iteration, const CandidateMap& previous)>;

// Replays the previous candidates.
CandidateMap identity_estimator(int iteration, const CandidateMap& previous);

// Replays, except that images with a candidates_iter<t>/<image_id>.jsonl
// file in the exchange directory take their candidates from it.
CandidateSource exchange_dir_estimator(const std::string& dir);

struct PipelineRun {
  std::vector<IterationState> states;  // after each executed iteration
  int iterations() const { return static_cast<int>(states.size()); }
  const IterationState& final_state() const { return states.back(); }
};

PipelineRun run_pipeline(const DatasetSplit& split, const CandidateMap& candidates,
                         const PipelineConfig& cfg, const GroundTruth* truth = nullptr,
                         const CandidateSource& source = identity_estimator);

// FS annotations plus accepted poses, as emitted for re-training.
std::vector<PoseRecord> annotation_records(const DatasetSplit& split, const IterationState& state);

// Candidates from heatmaps for every image that has them.
CandidateMap candidates_from_heatmaps(const std::map<std::string, std::vector<Heatmap>>& maps,
                                      const CandidateGenConfig& cfg);

}  // namespace selfpose
