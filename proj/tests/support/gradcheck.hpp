#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "brave/graph.hpp"

namespace brave::testing {

// Central finite differences through the full graph evaluation, perturbing
// one stored parameter coordinate at a time. Independent of the reverse-mode
// path it is used to check. `output` is a marked scalar output name.
//
// Stop-gradient outputs are held at their unperturbed values during the
// sweep: a parameter that also reaches the loss through sg[.] would
// otherwise contribute exactly the derivative that the operator is defined
// to drop.
inline std::vector<double> fd_gradient(const ad::Graph& graph, const std::string& output,
                                       const std::string& param,
                                       const std::map<std::string, Tensor>& inputs, double h,
                                       ad::ExecOptions opts = {}) {
  std::map<ad::NodeId, Tensor> pins;
  const auto sg_nodes = graph.nodes_of_op(ad::Op::kStopGradient);
  if (!sg_nodes.empty()) {
    pins = graph.capture(inputs, sg_nodes, opts);
    opts.pinned = &pins;
  }
  Tensor& value = graph.store()->mutable_value(param);
  std::vector<double> grad(static_cast<size_t>(value.size()));
  for (int64_t i = 0; i < value.size(); ++i) {
    const double v0 = value.at(i);
    value.set(i, v0 + h);
    double up = graph.evaluate(inputs, opts).outputs.at(output).at(0);
    value.set(i, v0 - h);
    double dn = graph.evaluate(inputs, opts).outputs.at(output).at(0);
    value.set(i, v0);
    grad[static_cast<size_t>(i)] = (up - dn) / (2.0 * h);
  }
  return grad;
}

inline double rel_error(double a, double b) {
  double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

}  // namespace brave::testing
