#include "brave/loss.hpp"

#include "brave/error.hpp"

namespace brave::loss {

ad::NodeId regression_loss(ad::Graph& g, ad::NodeId prediction, ad::NodeId target, bool stop_grad,
                           double eps) {
  ad::NodeId p = g.l2_normalize(prediction, eps);
  ad::NodeId t = g.l2_normalize(target, eps);
  if (stop_grad) t = g.stop_gradient(t);
  ad::NodeId sq = g.square(g.sub(p, t));
  return g.mean_all(g.row_sum(sq));
}

ad::NodeId multiview_target(ad::Graph& g, const std::vector<ad::NodeId>& projections,
                            const LossConfig& cfg) {
  if (projections.empty()) throw ConfigError("multiview target needs at least one view");
  ad::NodeId acc = -1;
  for (ad::NodeId z : projections) {
    ad::NodeId term = cfg.normalize_then_average ? g.l2_normalize(z, cfg.l2_eps) : z;
    acc = acc < 0 ? term : g.add(acc, term);
  }
  if (projections.size() > 1) acc = g.scale(acc, 1.0 / static_cast<double>(projections.size()));
  return acc;
}

TrainGraphInfo build_train_graph(ad::Graph& g, const model::ModelBundle& bundle,
                                 const std::vector<ViewGroup>& groups, const LossConfig& cfg) {
  if (groups.empty()) throw ConfigError("the objective needs at least one broad view group");
  TrainGraphInfo info;

  ad::NodeId x_n = g.input(info.narrow_input);
  ad::NodeId feat_n = bundle.narrow_backbone(g, x_n);
  ad::NodeId z_n = bundle.projector(g, feat_n, "narrow");
  ad::NodeId h_zn = cfg.use_predictor ? bundle.predictor(g, z_n, "narrow") : z_n;

  ad::NodeId total = -1;
  for (size_t k = 0; k < groups.size(); ++k) {
    const ViewGroup& group = groups[k];
    if (group.num_views < 1) throw ConfigError("broad view group needs K >= 1 views");
    const std::string mod = views::modality_name(group.modality);
    const std::string key = "b" + std::to_string(k) + "." + mod;
    info.group_keys.push_back(key);
    info.broad_inputs.emplace_back();

    std::vector<ad::NodeId> projections;
    std::vector<ad::NodeId> predictions;
    for (int j = 0; j < group.num_views; ++j) {
      const std::string input_name = "x_b" + std::to_string(k) + "_v" + std::to_string(j);
      info.broad_inputs.back().push_back(input_name);
      ad::NodeId x = g.input(input_name);
      ad::NodeId feat = bundle.broad_backbone(g, x, group.modality);
      ad::NodeId z = bundle.projector(g, feat, "broad_" + mod);
      projections.push_back(z);
      predictions.push_back(cfg.use_predictor ? bundle.predictor(g, z, "broad_" + mod) : z);
    }

    ad::NodeId target = multiview_target(g, projections, cfg);
    ad::NodeId l_nb = regression_loss(g, h_zn, target, cfg.use_stop_gradient, cfg.l2_eps);

    ad::NodeId l_bn = -1;
    for (ad::NodeId h_zb : predictions) {
      ad::NodeId term = regression_loss(g, h_zb, z_n, cfg.use_stop_gradient, cfg.l2_eps);
      l_bn = l_bn < 0 ? term : g.add(l_bn, term);
    }
    if (group.num_views > 1) l_bn = g.scale(l_bn, 1.0 / group.num_views);

    g.mark_output("loss_nb." + key, l_nb);
    g.mark_output("loss_bn." + key, l_bn);
    ad::NodeId pair = g.add(l_nb, l_bn);
    total = total < 0 ? pair : g.add(total, pair);
  }

  g.mark_output("loss", total);
  g.mark_output("z_n", z_n);
  info.loss_node = total;
  return info;
}

LossBreakdown LossBreakdown::from_outputs(const std::map<std::string, Tensor>& outputs,
                                          const std::vector<std::string>& group_keys) {
  LossBreakdown b;
  b.total = outputs.at("loss").at(0);
  for (const std::string& key : group_keys) {
    Pair p;
    p.n_to_b = outputs.at("loss_nb." + key).at(0);
    p.b_to_n = outputs.at("loss_bn." + key).at(0);
    b.terms[key] = p;
  }
  return b;
}

}  // namespace brave::loss
