#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "selfpose/candidates.hpp"
#include "selfpose/core.hpp"

namespace selfpose {

// Action-conditioned pose corpus with rendered heatmaps, for end-to-end runs
// without an external estimator.
struct SynthConfig {
  int n_actions = 8;
  int poses_per_action = 50;
  double base_noise = 2.0;    // px, per-joint Gaussian jitter
  double outlier_rate = 0.1;  // per-joint probability of a distractor peak
  std::uint64_t seed = 0;

  double fs_fraction = 0.4;   // leading share of each action's poses that is annotated
  double variant_rate = 0.3;  // WS poses drawn from a mirrored stance never seen in FS
  int n_backgrounds = 40;
  int image_size = 192;       // px, square
  double stride = 4.0;        // px per heatmap cell

  void validate() const;
};

struct SynthCorpus {
  DatasetSplit split;
  // True skeletons of every FS and WS image; evaluation only.
  std::map<std::string, Skeleton> ground_truth;
  // 14 maps per WS and background image.
  std::map<std::string, std::vector<Heatmap>> heatmaps;
};

SynthCorpus synth_corpus(const SynthConfig& cfg);

// The canonical stance of an action at unit scale, neck at the origin.
Skeleton action_template(ActionLabel a, bool variant = false);

}  // namespace selfpose
