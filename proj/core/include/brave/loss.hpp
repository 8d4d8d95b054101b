#pragma once

#include <map>
#include <string>
#include <vector>

#include "brave/graph.hpp"
#include "brave/model.hpp"
#include "brave/views.hpp"

namespace brave::loss {

struct LossConfig {
  // Both default on; turning either off is the collapse-ablation switch.
  bool use_predictor = true;
  bool use_stop_gradient = true;
  // Multi-view target: average projections then normalize (default), or
  // normalize each projection before averaging (ablation variant).
  bool normalize_then_average = false;
  double l2_eps = 1e-12;
};

// One broad modality carrying K same-modality views through one backbone.
struct ViewGroup {
  views::Modality modality = views::Modality::kRgb;
  int num_views = 1;
};

// mean over the batch of || pred/||pred|| - [sg] target/||target|| ||^2.
// Each term lies in [0, 4] and equals 2 - 2*cos of the normalized operands.
ad::NodeId regression_loss(ad::Graph& g, ad::NodeId prediction, ad::NodeId target, bool stop_grad,
                           double eps = 1e-12);

// Average of the K projections in projection space (or of their normalized
// directions under the ablation flag).
ad::NodeId multiview_target(ad::Graph& g, const std::vector<ad::NodeId>& projections,
                            const LossConfig& cfg);

struct TrainGraphInfo {
  std::string narrow_input = "x_n";
  // input names per group and view, e.g. broad_inputs[0] = {"x_b0_v0","x_b0_v1"}
  std::vector<std::vector<std::string>> broad_inputs;
  std::vector<std::string> group_keys;  // "b<k>.<modality>"
  ad::NodeId loss_node = -1;
};

// Assembles the full two-direction objective over all broad groups:
// per group k, the narrow-to-broad term regresses the (averaged) broad
// target from h(z_n), and the broad-to-narrow term averages the K per-view
// regressions of sg[z_n] from h(z_b^k). Outputs marked: "loss",
// "loss_nb.<key>", "loss_bn.<key>", "z_n".
TrainGraphInfo build_train_graph(ad::Graph& g, const model::ModelBundle& bundle,
                                 const std::vector<ViewGroup>& groups, const LossConfig& cfg);

struct LossBreakdown {
  struct Pair {
    double n_to_b = 0;
    double b_to_n = 0;
  };
  std::map<std::string, Pair> terms;  // keyed by group key
  double total = 0;

  static LossBreakdown from_outputs(const std::map<std::string, Tensor>& outputs,
                                    const std::vector<std::string>& group_keys);
};

}  // namespace brave::loss
