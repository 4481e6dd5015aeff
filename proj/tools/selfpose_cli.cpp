#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "selfpose/pipeline.hpp"
#include "selfpose/synth.hpp"

using namespace selfpose;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;

  // Defaults, then the config file, then --seed.
  PipelineConfig pipeline() const {
    PipelineConfig cfg;
    if (!config.empty()) cfg.apply(KeyValueConfig::load(config));
    if (seed) {
      cfg.seed = *seed;
      cfg.dpmm.seed = *seed;
    }
    cfg.validate();
    return cfg;
  }
};

// CSV rows: image_id,score,f0,f1,...
struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<double> scores;
  FeatureMatrix X;
};

std::string format_features(const std::vector<PoseRecord>& poses) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& p : poses) {
    out << p.image_id << ',' << p.score.value_or(0.0);
    const Eigen::VectorXd f = pipeline_feature(p.skeleton);
    for (Eigen::Index i = 0; i < f.size(); ++i) out << ',' << f(i);
    out << '\n';
  }
  return out.str();
}

FeatureTable read_features(const std::string& path) {
  std::istringstream in(read_file(path));
  FeatureTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    t.ids.push_back(cell);
    std::vector<double> row;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() < 2) throw DataError("line " + std::to_string(line_no) + ": expected id,score,features");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("line " + std::to_string(line_no) + ": feature width differs");
    }
    t.scores.push_back(row.front());
    rows.push_back(std::move(row));
  }
  const Eigen::Index d = rows.empty() ? 0 : Eigen::Index(rows.front().size() - 1);
  t.X.resize(Eigen::Index(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) t.X(Eigen::Index(i), j) = rows[i][std::size_t(j) + 1];
  }
  return t;
}

CandidateMap read_candidates(const std::string& path) {
  CandidateMap out;
  for (const auto& r : read_pose_records(path)) out[r.image_id].push_back(to_candidate(r));
  return out;
}

std::vector<PoseRecord> candidate_records(const CandidateMap& m) {
  std::vector<PoseRecord> out;
  for (const auto& [id, list] : m) {
    for (const auto& c : list) out.push_back(to_record(c));
  }
  return out;
}

// Heatmap files <image_id>.sphm in a directory.
std::map<std::string, std::vector<Heatmap>> read_heatmap_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::map<std::string, std::vector<Heatmap>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".sphm") out[e.path().stem().string()] = read_heatmaps(e.path().string());
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_file_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose self-training with action-specific selectors and clustering"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Seed for every randomized step");
    sub->add_option("--config", common.config, "key=value config file")->check(CLI::ExistingFile);
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic action-pose corpus");
  add_common(synth);
  SynthConfig sc;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--actions", sc.n_actions);
  synth->add_option("--poses", sc.poses_per_action, "Poses per action");
  synth->add_option("--noise", sc.base_noise, "Joint jitter, px");
  synth->add_option("--outlier-rate", sc.outlier_rate);
  synth->add_option("--backgrounds", sc.n_backgrounds);

  // features
  auto* features = app.add_subcommand("features", "Pose features of every record, as CSV");
  add_common(features);
  std::string feat_in, feat_out;
  features->add_option("--poses", feat_in, "Pose records")->required();
  features->add_option("--out", feat_out, "CSV output (default stdout)");

  // train-svm
  auto* train_svm = app.add_subcommand("train-svm", "Train the pose selector");
  add_common(train_svm);
  std::string train_split, train_cands, train_out, train_action;
  train_svm->add_option("--split", train_split, "Dataset split")->required();
  train_svm->add_option("--candidates", train_cands, "Candidate records, backgrounds included")->required();
  train_svm->add_option("--out", train_out, "Model file")->required();
  train_svm->add_option("--action", train_action, "Write this action's model instead of the general one");

  // candidates
  auto* candidates = app.add_subcommand("candidates", "Enumerate candidate poses from heatmaps");
  add_common(candidates);
  std::string cand_dir, cand_out;
  candidates->add_option("--heatmaps", cand_dir, "Directory of <image_id>.sphm files")->required();
  candidates->add_option("--out", cand_out, "Candidate records")->required();

  // select
  auto* select_cmd = app.add_subcommand("select", "Pick one candidate per image with a selector model");
  add_common(select_cmd);
  std::string sel_model, sel_cands, sel_out;
  std::optional<double> sel_margin;
  select_cmd->add_option("--model", sel_model)->required();
  select_cmd->add_option("--candidates", sel_cands)->required();
  select_cmd->add_option("--out", sel_out, "Selected pose records")->required();
  select_cmd->add_option("--margin", sel_margin);

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Cluster feature rows");
  add_common(cluster);
  std::string clu_in, clu_out;
  cluster->add_option("--features", clu_in, "CSV from `features`")->required();
  cluster->add_option("--out", clu_out, "id,cluster lines (default stdout)");

  // outliers
  auto* outliers = app.add_subcommand("outliers", "Cluster feature rows and test small clusters");
  add_common(outliers);
  std::string out_in, out_out;
  outliers->add_option("--features", out_in, "CSV from `features`")->required();
  outliers->add_option("--out", out_out, "Report (default stdout)");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run the self-training loop on a corpus directory");
  add_common(pipeline);
  std::string pipe_data, pipe_out, pipe_scheme;
  std::optional<int> pipe_iterations;
  pipeline->add_option("--data", pipe_data, "Directory written by `synth`")->required();
  pipeline->add_option("--out", pipe_out, "Exchange directory for annotations and reports")->required();
  pipeline->add_option("--scheme", pipe_scheme)->check(CLI::IsMember({"semi", "weak", "weakC"}));
  pipeline->add_option("--iterations", pipe_iterations)->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "PCK and PCP of estimates against ground truth");
  add_common(eval);
  std::string eval_gt, eval_est, eval_ref = "bbox";
  double eval_frac = 0.2, eval_pcp = 0.5;
  eval->add_option("--gt", eval_gt)->required();
  eval->add_option("--est", eval_est)->required();
  eval->add_option("--frac", eval_frac, "PCK threshold fraction");
  eval->add_option("--ref", eval_ref, "PCK reference length")->check(CLI::IsMember({"bbox", "head"}));
  eval->add_option("--pcp", eval_pcp, "PCP threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) {
      if (common.seed) sc.seed = *common.seed;
      sc.validate();
      const SynthCorpus corpus = synth_corpus(sc);
      write_split((fs::path(synth_out) / "split.jsonl").string(), corpus.split);
      std::vector<PoseRecord> truth;
      for (const auto& [id, s] : corpus.ground_truth) {
        PoseRecord r;
        r.image_id = id;
        r.skeleton = s;
        r.provenance = Provenance::Annotation;
        truth.push_back(r);
      }
      write_pose_records((fs::path(synth_out) / "ground_truth.jsonl").string(), truth);
      for (const auto& [id, maps] : corpus.heatmaps) {
        write_heatmaps((fs::path(synth_out) / "heatmaps" / (id + ".sphm")).string(), maps);
      }
      std::cout << corpus.split.fs.size() << " FS, " << corpus.split.ws.size() << " WS, "
                << corpus.split.backgrounds.size() << " backgrounds\n";
    } else if (features->parsed()) {
      write_text(feat_out, format_features(read_pose_records(feat_in)));
    } else if (train_svm->parsed()) {
      const PipelineConfig cfg = common.pipeline();
      const DatasetSplit split = read_split(train_split);
      const auto data = build_training_data(split, read_candidates(train_cands), cfg);
      const auto models = specialize_models(data, split, cfg);
      const SvmModel& m = train_action.empty() ? models.general : models.per_action.at(parse_action(train_action));
      save_model(m, train_out);
      std::cout << "trained on " << data.set.size() << " samples\n";
    } else if (candidates->parsed()) {
      const CandidateMap m = candidates_from_heatmaps(read_heatmap_dir(cand_dir), common.pipeline().candidates);
      const auto records = candidate_records(m);
      write_pose_records(cand_out, records);
      std::cout << records.size() << " candidates over " << m.size() << " images\n";
    } else if (select_cmd->parsed()) {
      const double margin = sel_margin.value_or(common.pipeline().margin);
      const SvmModel model = load_model(sel_model);
      std::vector<PoseRecord> picked;
      for (const auto& [id, list] : read_candidates(sel_cands)) {
        std::vector<FeaturedCandidate> fc;
        for (const auto& c : list) fc.push_back({c, pipeline_feature(c.skeleton)});
        if (const auto i = select(model, fc, margin)) picked.push_back(to_record(list[*i], Provenance::Svm));
      }
      write_pose_records(sel_out, picked);
      std::cout << picked.size() << " selected\n";
    } else if (cluster->parsed() || outliers->parsed()) {
      const FeatureTable t = read_features(cluster->parsed() ? clu_in : out_in);
      if (t.X.rows() < 4) throw DataError("too few features: " + std::to_string(t.X.rows()) + " (need 4)");
      const DpmmConfig cfg = common.pipeline().dpmm;
      FeatureMatrix X = t.X;
      if (cfg.pca_dim) X = project(X, int(std::min<Eigen::Index>({*cfg.pca_dim, X.cols(), X.rows()}))).first;
      const Partition p = gibbs_cluster(X, cfg);
      if (cluster->parsed()) {
        std::ostringstream out;
        for (std::size_t i = 0; i < t.ids.size(); ++i) out << t.ids[i] << ',' << p.assignments()[i] << '\n';
        write_text(clu_out, out.str());
      } else {
        write_text(out_out, format_outlier_report(detect_outliers(X, t.scores, p, cfg)));
      }
    } else if (pipeline->parsed()) {
      PipelineConfig cfg = common.pipeline();
      if (!pipe_scheme.empty()) cfg.scheme = parse_scheme(pipe_scheme);
      if (pipe_iterations) cfg.max_iterations = *pipe_iterations;
      cfg.exchange_dir = pipe_out;
      cfg.validate();
      const fs::path data(pipe_data);
      const DatasetSplit split = read_split((data / "split.jsonl").string());
      const CandidateMap cands = candidates_from_heatmaps(read_heatmap_dir((data / "heatmaps").string()), cfg.candidates);
      GroundTruth truth;
      const bool has_truth = fs::exists(data / "ground_truth.jsonl");
      if (has_truth) {
        for (const auto& r : read_pose_records((data / "ground_truth.jsonl").string())) truth[r.image_id] = r.skeleton;
      }
      const PipelineRun run =
          run_pipeline(split, cands, cfg, has_truth ? &truth : nullptr, exchange_dir_estimator(pipe_out));
      for (const auto& st : run.states) {
        const MetricsReport& r = st.reports.back();
        std::cout << "iteration " << st.iteration << ": accepted " << st.accepted.size();
        if (has_truth && r.precision) std::cout << ", precision " << *r.precision;
        if (has_truth && r.recall) std::cout << ", recall " << *r.recall;
        std::cout << '\n';
      }
    } else if (eval->parsed()) {
      std::map<std::string, PoseRecord> gt;
      for (auto& r : read_pose_records(eval_gt)) gt.emplace(r.image_id, std::move(r));
      std::vector<PoseEvalPair> pairs;
      int pcp_ok = 0;
      for (const auto& r : read_pose_records(eval_est)) {
        const auto it = gt.find(r.image_id);
        if (it == gt.end()) throw DataError("no ground truth for image '" + r.image_id + "'");
        pairs.push_back({it->second.skeleton, r.skeleton, it->second.action});
        pcp_ok += pcp_correct(it->second.skeleton, r.skeleton, eval_pcp).all_correct;
      }
      if (pairs.empty()) throw DataError("no estimates");
      MetricsReport rep;
      accumulate_pck(rep, pairs, eval_frac, eval_ref == "head" ? ReferenceLength::HeadSegment : ReferenceLength::BoundingBox);
      std::cout << format_pck_table(rep);
      std::cout << "PCP@" << eval_pcp << ": " << pcp_ok << "/" << pairs.size() << '\n';
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
