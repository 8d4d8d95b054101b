#include "brave/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "brave/error.hpp"
#include "brave/threading.hpp"

namespace brave::ad {

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::create(const std::string& name, Tensor value, bool trainable) {
  auto [it, inserted] = entries_.try_emplace(name, Entry{std::move(value), trainable});
  if (!inserted) throw ConfigError("parameter '" + name + "' already exists");
}

bool ParamStore::contains(const std::string& name) const { return entries_.count(name) > 0; }

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

Tensor& ParamStore::mutable_value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.trainable;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) out.push_back(name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph construction

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParam: return "param";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kAddBias: return "add_bias";
    case Op::kMatmul: return "matmul";
    case Op::kConv3d: return "conv3d";
    case Op::kRelu: return "relu";
    case Op::kBatchNorm: return "batch_norm";
    case Op::kGlobalMeanPool: return "global_mean_pool";
    case Op::kRowSum: return "row_sum";
    case Op::kMeanAll: return "mean_all";
    case Op::kSumAll: return "sum_all";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kL2NormalizeRows: return "l2_normalize";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "?";
}

Graph::Graph(Precision prec, std::shared_ptr<ParamStore> store)
    : prec_(prec), store_(store ? std::move(store) : std::make_shared<ParamStore>()) {}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw ConfigError("node id " + std::to_string(id) + " out of range");
  }
}

std::string Graph::node_desc(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  std::string d = std::string(op_name(n.op)) + "#" + std::to_string(id);
  if (!n.label.empty()) d += " '" + n.label + "'";
  return d;
}

NodeId Graph::input(const std::string& name) {
  if (input_nodes_.count(name)) throw ConfigError("duplicate graph input '" + name + "'");
  NodeId id = push({.op = Op::kInput, .inputs = {}, .label = name});
  input_nodes_[name] = id;
  return id;
}

NodeId Graph::param(const std::string& name, Tensor init, bool trainable) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return it->second;  // shared use within the graph
  if (store_->contains(name)) {
    if (store_->get(name).shape() != init.shape()) {
      throw ConfigError("parameter '" + name + "' exists with shape " +
                        shape_str(store_->get(name).shape()) + ", requested " +
                        shape_str(init.shape()));
    }
  } else {
    store_->create(name, init.to(prec_), trainable);
  }
  NodeId id = push({.op = Op::kParam, .inputs = {}, .label = name});
  param_nodes_[name] = id;
  return id;
}

NodeId Graph::constant(Tensor value, const std::string& label) {
  NodeId id = push({.op = Op::kConstant, .inputs = {}, .label = label});
  const_values_.push_back(value.to(prec_));
  const_index_.push_back(id);
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return push({.op = Op::kAdd, .inputs = {a, b}});
}

NodeId Graph::sub(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return push({.op = Op::kSub, .inputs = {a, b}});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return push({.op = Op::kMul, .inputs = {a, b}});
}

NodeId Graph::scale(NodeId x, double c) {
  check_id(x);
  Node n{.op = Op::kScale, .inputs = {x}};
  n.scalar = c;
  return push(std::move(n));
}

NodeId Graph::add_bias(NodeId x, NodeId bias) {
  check_id(x);
  check_id(bias);
  return push({.op = Op::kAddBias, .inputs = {x, bias}});
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  return push({.op = Op::kMatmul, .inputs = {a, b}});
}

NodeId Graph::conv3d(NodeId x, NodeId weight, std::array<int, 3> stride) {
  check_id(x);
  check_id(weight);
  for (int s : stride) {
    if (s < 1) throw ConfigError("conv3d stride must be >= 1");
  }
  Node n{.op = Op::kConv3d, .inputs = {x, weight}};
  n.stride = stride;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  check_id(x);
  return push({.op = Op::kRelu, .inputs = {x}});
}

NodeId Graph::batch_norm(NodeId x, NodeId scale, NodeId offset, const std::string& buffer_prefix,
                         double eps, double decay) {
  check_id(x);
  check_id(scale);
  check_id(offset);
  Node n{.op = Op::kBatchNorm, .inputs = {x, scale, offset}};
  n.eps = eps;
  n.decay = decay;
  n.buffer_prefix = buffer_prefix;
  // Running statistics live in the store so they checkpoint with the model.
  const Tensor& sc = store_->get(nodes_[static_cast<size_t>(scale)].label);
  if (!store_->contains(buffer_prefix + ".bn_running_mean")) {
    store_->create(buffer_prefix + ".bn_running_mean", Tensor(sc.shape(), prec_), false);
    store_->create(buffer_prefix + ".bn_running_var", Tensor::full(sc.shape(), 1.0, prec_), false);
  }
  return push(std::move(n));
}

NodeId Graph::global_mean_pool(NodeId x) {
  check_id(x);
  return push({.op = Op::kGlobalMeanPool, .inputs = {x}});
}

NodeId Graph::row_sum(NodeId x) {
  check_id(x);
  return push({.op = Op::kRowSum, .inputs = {x}});
}

NodeId Graph::mean_all(NodeId x) {
  check_id(x);
  return push({.op = Op::kMeanAll, .inputs = {x}});
}

NodeId Graph::sum_all(NodeId x) {
  check_id(x);
  return push({.op = Op::kSumAll, .inputs = {x}});
}

NodeId Graph::square(NodeId x) {
  check_id(x);
  return push({.op = Op::kSquare, .inputs = {x}});
}

NodeId Graph::sqrt(NodeId x) {
  check_id(x);
  return push({.op = Op::kSqrt, .inputs = {x}});
}

NodeId Graph::l2_normalize(NodeId x, double eps) {
  check_id(x);
  Node n{.op = Op::kL2NormalizeRows, .inputs = {x}};
  n.eps = eps;
  return push(std::move(n));
}

NodeId Graph::stop_gradient(NodeId x) {
  check_id(x);
  return push({.op = Op::kStopGradient, .inputs = {x}});
}

void Graph::mark_output(const std::string& name, NodeId id) {
  check_id(id);
  output_nodes_[name] = id;
}

NodeId Graph::output_node(const std::string& name) const {
  auto it = output_nodes_.find(name);
  if (it == output_nodes_.end()) throw ConfigError("unknown graph output '" + name + "'");
  return it->second;
}

}  // namespace brave::ad
