#include "selfpose/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

namespace selfpose {

namespace fs = std::filesystem;

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Semi: return "semi";
    case Scheme::Weak: return "weak";
    case Scheme::WeakC: return "weakC";
  }
  return "semi";
}

Scheme parse_scheme(std::string_view s) {
  if (s == "semi") return Scheme::Semi;
  if (s == "weak") return Scheme::Weak;
  if (s == "weakC" || s == "weakc") return Scheme::WeakC;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}

bool IterationState::has_image(const std::string& id) const {
  return std::any_of(accepted.begin(), accepted.end(),
                     [&](const AcceptedPose& p) { return p.image_id == id; });
}

void PipelineConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be at least 1");
  if (!(eps > 0.0 && eps <= 1.0) || !(eval_eps > 0.0 && eval_eps <= 1.0)) {
    throw std::invalid_argument("PCP thresholds must lie in (0, 1]");
  }
  if (positives_per_annotation < 1 || negatives_per_background < 1 || cluster_top_n < 1) {
    throw std::invalid_argument("per-image sample counts must be positive");
  }
  dpmm.validate();
  candidates.validate();
}

void PipelineConfig::apply(const KeyValueConfig& kv) {
  if (auto s = kv.get("scheme")) scheme = parse_scheme(*s);
  kv.read("max_iterations", max_iterations);
  kv.read("eps", eps);
  kv.read("eval_eps", eval_eps);
  kv.read("pck_frac", pck_frac);
  kv.read("margin", margin);
  kv.read("positives_per_annotation", positives_per_annotation);
  kv.read("negatives_per_background", negatives_per_background);
  kv.read("min_action_annotations", min_action_annotations);
  kv.read("cluster_top_n", cluster_top_n);
  kv.read("exchange_dir", exchange_dir);
  kv.read("seed", seed);

  kv.read("svm.reg", svm.reg);
  kv.read("svm.tol", svm.tol);
  kv.read("svm.max_iter", svm.max_iter);
  kv.read("svm.standardize", svm.standardize);

  kv.read("dpmm.gamma", dpmm.gamma);
  kv.read("dpmm.alpha", dpmm.alpha);
  kv.read("dpmm.gibbs_iters", dpmm.gibbs_iters);
  kv.read("dpmm.burn_in", dpmm.burn_in);
  kv.read("dpmm.seed", dpmm.seed);
  kv.read("dpmm.small_cluster_max", dpmm.small_cluster_max);
  if (kv.contains("dpmm.pca_dim")) {
    int d = 0;
    kv.read("dpmm.pca_dim", d);
    dpmm.pca_dim = d > 0 ? std::optional<int>(d) : std::nullopt;
  }
  if (kv.contains("dpmm.mu0") || kv.contains("dpmm.kappa0") || kv.contains("dpmm.a0") ||
      kv.contains("dpmm.b0")) {
    NigBase b = dpmm.base.value_or(NigBase{0.0, 0.1, 1.0, 1.0});
    kv.read("dpmm.mu0", b.mu0);
    kv.read("dpmm.kappa0", b.kappa0);
    kv.read("dpmm.a0", b.a0);
    kv.read("dpmm.b0", b.b0);
    dpmm.base = b;
  }

  kv.read("candidates.threshold", candidates.threshold);
  kv.read("candidates.top_k", candidates.top_k);
  kv.read("candidates.beam", candidates.beam);
  kv.read("candidates.nms_radius", candidates.nms_radius);
}

Eigen::VectorXd pipeline_feature(const Skeleton& s) {
  return pr_feature(s, nullptr, nullptr, {.normalize_scale = true}).config;
}

SelectorTrainingData build_training_data(const DatasetSplit& split, const CandidateMap& background,
                                         const PipelineConfig& cfg) {
  if (split.fs.empty()) throw DataError("empty FS set");
  SelectorTrainingData data;
  for (std::size_t i = 0; i < split.fs.size(); ++i) {
    const auto& e = split.fs[i];
    data.set.add(pipeline_feature(e.annotation), +1);
    data.sample_action.push_back(e.action);
    const auto copies = synthesize_positives(e.annotation, cfg.eps, cfg.positives_per_annotation,
                                             cfg.seed * 1000003ULL + i);
    for (const auto& s : copies) {
      data.set.add(pipeline_feature(s), +1);
      data.sample_action.push_back(e.action);
    }
  }
  for (const auto& id : split.backgrounds) {
    auto it = background.find(id);
    if (it == background.end()) continue;
    std::vector<CandidatePose> top = it->second;
    std::stable_sort(top.begin(), top.end(),
                     [](const CandidatePose& a, const CandidatePose& b) { return a.score > b.score; });
    if (int(top.size()) > cfg.negatives_per_background) top.resize(cfg.negatives_per_background);
    for (const auto& s : mine_negatives(top, split.backgrounds)) {
      data.set.add(pipeline_feature(s), -1);
      data.sample_action.push_back(std::nullopt);
    }
  }
  return data;
}

SpecializedModels specialize_models(const SelectorTrainingData& data, const DatasetSplit& split,
                                    const PipelineConfig& cfg) {
  if (split.fs.empty()) throw DataError("empty FS set");
  SpecializedModels out;
  out.general = train(data.set, cfg.svm);

  std::map<ActionLabel, int> fs_count;
  std::set<ActionLabel> actions;
  for (const auto& e : split.fs) {
    ++fs_count[e.action];
    actions.insert(e.action);
  }
  for (const auto& e : split.ws) actions.insert(e.action);

  std::map<ActionLabel, std::future<SvmModel>> jobs;
  for (ActionLabel a : actions) {
    if (a == ActionLabel::General || fs_count[a] < cfg.min_action_annotations) {
      out.per_action[a] = out.general;
      continue;
    }
    jobs[a] = std::async(std::launch::async, [&data, &cfg, a] {
      TrainSet ts;
      for (std::size_t i = 0; i < data.set.size(); ++i) {
        const auto& tag = data.sample_action[i];
        if (data.set.labels[i] < 0 || (tag && *tag == a)) ts.add(data.set.features[i], data.set.labels[i]);
      }
      return train(ts, cfg.svm);
    });
  }
  for (auto& [a, job] : jobs) out.per_action[a] = job.get();
  return out;
}

IterationState initial_state(const DatasetSplit& split, const CandidateMap& candidates,
                             const PipelineConfig& cfg) {
  cfg.validate();
  if (const auto v = validate_split(split); !v.empty()) throw DataError(v.front().detail);
  const auto data = build_training_data(split, candidates, cfg);
  auto models = specialize_models(data, split, cfg);
  IterationState s;
  s.general_model = std::move(models.general);
  s.per_action_models = std::move(models.per_action);
  return s;
}

namespace {

struct Target {
  std::string image_id;
  std::optional<ActionLabel> action;
  bool in_ws = false;
};

struct Selection {
  CandidatePose pose;
  Provenance provenance;
};

std::vector<FeaturedCandidate> featurize(const std::vector<CandidatePose>& cands) {
  std::vector<FeaturedCandidate> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back({c, pipeline_feature(c.skeleton)});
  return out;
}

std::string report_text(const IterationState& s, const PipelineConfig& cfg) {
  std::ostringstream os;
  os << "# iteration " << s.iteration << " scheme " << scheme_name(cfg.scheme) << '\n';
  os << "# accepted " << s.accepted.size() << '\n';
  if (!s.reports.empty()) {
    os << format_pck_table(s.reports.back()) << '\n' << format_report_record(s.reports.back());
  }
  for (const auto& audit : s.outlier_audit) os << audit;
  return os.str();
}

}  // namespace

IterationState run_iteration(const IterationState& state, const DatasetSplit& split,
                             const CandidateMap& candidates_in, const PipelineConfig& cfg,
                             const GroundTruth* truth) {
  IterationState next = state;
  next.iteration = state.iteration + 1;
  next.outlier_audit.clear();

  std::map<std::string, ActionLabel> ws_action;
  for (const auto& e : split.ws) ws_action.emplace(e.image_id, e.action);
  std::set<std::string> us(split.us.begin(), split.us.end());
  std::set<std::string> ignored(split.backgrounds.begin(), split.backgrounds.end());
  for (const auto& e : split.fs) ignored.insert(e.image_id);

  std::vector<Target> targets;
  for (const auto& [id, cands] : candidates_in) {
    if (ignored.contains(id)) continue;
    const auto ws = ws_action.find(id);
    if (cfg.scheme == Scheme::Semi) {
      if (ws != ws_action.end() || us.contains(id)) targets.push_back({id, std::nullopt, ws != ws_action.end()});
      continue;
    }
    if (ws == ws_action.end()) throw DataError("missing action grouping for image '" + id + "'");
    targets.push_back({id, ws->second, true});
  }

  // Selector pass, parallel over images.
  std::vector<std::vector<FeaturedCandidate>> featured(targets.size());
  std::vector<std::optional<std::size_t>> svm_pick(targets.size());
  {
    std::vector<std::future<void>> jobs;
    const std::size_t n_workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t w = 0; w < n_workers; ++w) {
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t t = w; t < targets.size(); t += n_workers) {
          featured[t] = featurize(candidates_in.at(targets[t].image_id));
          const SvmModel* model = &state.general_model;
          if (targets[t].action) {
            if (auto it = state.per_action_models.find(*targets[t].action);
                it != state.per_action_models.end()) {
              model = &it->second;
            }
          }
          svm_pick[t] = select(*model, featured[t], cfg.margin);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }

  std::map<std::string, Selection> selected;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (svm_pick[t]) selected.emplace(targets[t].image_id, Selection{featured[t][*svm_pick[t]].pose, Provenance::Svm});
  }

  if (cfg.scheme == Scheme::WeakC) {
    std::map<ActionLabel, std::vector<FeaturedCandidate>> pools;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (svm_pick[t]) continue;
      std::vector<FeaturedCandidate> top = featured[t];
      std::stable_sort(top.begin(), top.end(), [](const FeaturedCandidate& a, const FeaturedCandidate& b) {
        return a.pose.score > b.pose.score;
      });
      if (int(top.size()) > cfg.cluster_top_n) top.resize(cfg.cluster_top_n);
      auto& pool = pools[*targets[t].action];
      pool.insert(pool.end(), top.begin(), top.end());
    }
    for (const auto& [action, pool] : pools) {
      DpmmConfig dc = cfg.dpmm;
      dc.seed = cfg.dpmm.seed + 7919ULL * static_cast<std::uint64_t>(action) + 104729ULL * next.iteration;
      const RecoveryResult rec = recover_pose_indices(pool, dc);
      for (std::size_t i : rec.kept) {
        // the selector's choice wins on conflict
        selected.emplace(pool[i].pose.image_id, Selection{pool[i].pose, Provenance::Cluster});
      }
      if (pool.size() >= 4) {
        next.outlier_audit.push_back("# outliers " + std::string(action_name(action)) + '\n' +
                                     format_outlier_report(rec.report));
      }
    }
  }

  for (const auto& [id, sel] : selected) {
    if (next.has_image(id)) continue;
    AcceptedPose p;
    p.image_id = id;
    p.skeleton = sel.pose.skeleton;
    if (auto it = ws_action.find(id); it != ws_action.end()) p.action = it->second;
    p.provenance = sel.provenance;
    p.score = sel.pose.score;
    p.iteration = next.iteration;
    next.accepted.push_back(std::move(p));
  }

  MetricsReport report;
  if (truth != nullptr) {
    std::vector<GroundTruthImage> gts;
    std::vector<std::vector<Skeleton>> cand_lists;
    std::vector<std::optional<Skeleton>> picks;
    std::vector<PoseEvalPair> pairs;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (!targets[t].in_ws) continue;
      const auto& id = targets[t].image_id;
      GroundTruthImage g{id, std::nullopt, ws_action.at(id)};
      if (auto it = truth->find(id); it != truth->end()) g.gt = it->second;
      std::vector<Skeleton> sk;
      for (const auto& c : featured[t]) sk.push_back(c.pose.skeleton);
      std::optional<Skeleton> pick;
      if (auto it = selected.find(id); it != selected.end()) {
        pick = it->second.pose.skeleton;
        if (g.gt) pairs.push_back({*g.gt, *pick, g.action});
      }
      gts.push_back(std::move(g));
      cand_lists.push_back(std::move(sk));
      picks.push_back(std::move(pick));
    }
    report = selection_stats(gts, cand_lists, picks, cfg.eval_eps);
    accumulate_pck(report, pairs, cfg.pck_frac, ReferenceLength::BoundingBox);
  }
  next.reports.push_back(std::move(report));

  if (!cfg.exchange_dir.empty()) {
    const std::string t = std::to_string(next.iteration);
    write_pose_records((fs::path(cfg.exchange_dir) / ("annotations_iter" + t + ".jsonl")).string(),
                       annotation_records(split, next));
    write_file_atomic((fs::path(cfg.exchange_dir) / ("report_iter" + t + ".txt")).string(),
                      report_text(next, cfg));
  }
  return next;
}

bool stop_check(const IterationState& prev, const IterationState& cur, const PipelineConfig& cfg) {
  if (cur.iteration >= cfg.max_iterations) return true;
  for (const auto& p : cur.accepted) {
    if (!prev.has_image(p.image_id)) return false;
  }
  return true;
}

CandidateMap identity_estimator(int, const CandidateMap& previous) { return previous; }

CandidateSource exchange_dir_estimator(const std::string& dir) {
  return [dir](int iteration, const CandidateMap& previous) {
    CandidateMap out = previous;
    const fs::path sub = fs::path(dir) / ("candidates_iter" + std::to_string(iteration));
    if (!fs::is_directory(sub)) return out;
    for (const auto& entry : fs::directory_iterator(sub)) {
      if (entry.path().extension() != ".jsonl") continue;
      std::vector<CandidatePose> cands;
      for (const auto& r : read_pose_records(entry.path().string())) {
        CandidatePose c = to_candidate(r);
        if (!r.stage) c.stage = iteration;
        cands.push_back(std::move(c));
      }
      out[entry.path().stem().string()] = std::move(cands);
    }
    return out;
  };
}

PipelineRun run_pipeline(const DatasetSplit& split, const CandidateMap& candidates,
                         const PipelineConfig& cfg, const GroundTruth* truth,
                         const CandidateSource& source) {
  PipelineRun run;
  IterationState prev = initial_state(split, candidates, cfg);
  CandidateMap current = candidates;
  for (int t = 1;; ++t) {
    if (t > 1) current = source(t, current);
    IterationState cur = run_iteration(prev, split, current, cfg, truth);
    run.states.push_back(cur);
    if (stop_check(prev, cur, cfg)) break;
    prev = std::move(cur);
  }
  return run;
}

std::vector<PoseRecord> annotation_records(const DatasetSplit& split, const IterationState& state) {
  std::vector<PoseRecord> out;
  for (const auto& e : split.fs) {
    out.push_back({e.image_id, e.action, e.annotation, std::nullopt, std::nullopt, Provenance::Annotation});
  }
  for (const auto& p : state.accepted) {
    out.push_back({p.image_id, p.action, p.skeleton, p.score, p.iteration, p.provenance});
  }
  return out;
}

CandidateMap candidates_from_heatmaps(const std::map<std::string, std::vector<Heatmap>>& maps,
                                      const CandidateGenConfig& cfg) {
  CandidateMap out;
  for (const auto& [id, hm] : maps) out.emplace(id, enumerate_candidates(hm, cfg, id, 1));
  return out;
}

}  // namespace selfpose
