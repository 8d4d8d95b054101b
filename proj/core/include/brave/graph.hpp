#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "brave/tensor.hpp"

namespace brave::ad {

using NodeId = int32_t;

// Named leaf tensors shared between graphs (a training graph and a feature
// graph reference the same underlying parameters). Buffers are non-trainable
// state such as batch-norm running statistics. std::map keeps iteration in
// name order, which makes optimizer traversal and serialization stable.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  void create(const std::string& name, Tensor value, bool trainable);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& mutable_value(const std::string& name);
  bool trainable(const std::string& name) const;

  std::vector<std::string> names() const;            // all, sorted
  std::vector<std::string> trainable_names() const;  // sorted
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

enum class Op : uint8_t {
  kInput,
  kParam,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddBias,
  kMatmul,
  kConv3d,
  kRelu,
  kBatchNorm,
  kGlobalMeanPool,
  kRowSum,
  kMeanAll,
  kSumAll,
  kSquare,
  kSqrt,
  kL2NormalizeRows,
  kStopGradient,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<NodeId> inputs;
  std::string label;             // input/param name or empty
  std::array<int, 3> stride{1, 1, 1};
  double scalar = 0.0;           // kScale factor
  double eps = 0.0;              // kL2NormalizeRows / kBatchNorm epsilon
  double decay = 0.0;            // kBatchNorm running-stat decay
  std::string buffer_prefix;     // kBatchNorm running stat names
};

struct ExecOptions {
  bool training = false;
  // Overrides forward values of specific nodes. Used by finite-difference
  // oracles to hold stop-gradient outputs at their unperturbed values, which
  // is what the stop-gradient derivative semantics denote.
  const std::map<NodeId, Tensor>* pinned = nullptr;
};

struct ExecResult {
  std::map<std::string, Tensor> outputs;
  // Batch-norm running statistics recomputed during a training-mode forward
  // pass. The caller decides when to commit them to the store, which keeps
  // evaluation itself a pure function.
  std::vector<std::pair<std::string, Tensor>> stat_updates;
};

struct GradientResult {
  std::map<std::string, Tensor> grads;
  ExecResult forward;
  double output_value = 0.0;
};

// A static computation graph over dense tensors. Nodes are appended in
// topological order; shapes are inferred per evaluation, so one graph serves
// any batch size. Construction is single-threaded; a built graph is immutable
// during evaluation and safe to evaluate from many threads concurrently.
class Graph {
 public:
  explicit Graph(Precision prec, std::shared_ptr<ParamStore> store = nullptr);

  Precision precision() const { return prec_; }
  const std::shared_ptr<ParamStore>& store() const { return store_; }

  NodeId input(const std::string& name);
  // Registers the parameter in the store with the given initial value (or
  // reuses the stored value if the name already exists with matching shape).
  NodeId param(const std::string& name, Tensor init, bool trainable = true);
  NodeId constant(Tensor value, const std::string& label = "");

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double c);
  NodeId add_bias(NodeId x, NodeId bias);
  NodeId matmul(NodeId a, NodeId b);
  // Input [B,D1,D2,D3,Cin], weight [k1,k2,k3,Cin,Cout], "same" zero padding,
  // output [B,ceil(D1/s1),ceil(D2/s2),ceil(D3/s3),Cout].
  NodeId conv3d(NodeId x, NodeId weight, std::array<int, 3> stride);
  NodeId relu(NodeId x);
  // scale/offset shape [C] where C is the trailing axis of x; normalizes over
  // all leading axes. buffer_prefix names the running-stat buffers
  // "<prefix>.bn_running_mean" / "<prefix>.bn_running_var" in the store.
  NodeId batch_norm(NodeId x, NodeId scale, NodeId offset, const std::string& buffer_prefix,
                    double eps = 1e-5, double decay = 0.9);
  NodeId global_mean_pool(NodeId x);  // [B,D1,D2,D3,C] -> [B,C]
  NodeId row_sum(NodeId x);           // [N,F] -> [N]
  NodeId mean_all(NodeId x);          // -> scalar
  NodeId sum_all(NodeId x);           // -> scalar
  NodeId square(NodeId x);
  NodeId sqrt(NodeId x);
  NodeId l2_normalize(NodeId x, double eps = 1e-12);  // [F] or [N,F], row-wise
  NodeId stop_gradient(NodeId x);

  void mark_output(const std::string& name, NodeId id);
  NodeId output_node(const std::string& name) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::map<std::string, NodeId>& inputs() const { return input_nodes_; }
  std::string node_desc(NodeId id) const;

  // Pure forward evaluation of all marked outputs.
  ExecResult evaluate(const std::map<std::string, Tensor>& inputs, ExecOptions opts = {}) const;

  std::vector<NodeId> nodes_of_op(Op op) const;

  // Forward values of arbitrary nodes (e.g. to capture stop-gradient outputs
  // before a finite-difference sweep).
  std::map<NodeId, Tensor> capture(const std::map<std::string, Tensor>& inputs,
                                   const std::vector<NodeId>& ids, ExecOptions opts = {}) const;

  // Reverse-mode gradient of a scalar node with respect to named parameters.
  // Parameters reached only through stop_gradient receive exactly zero.
  GradientResult gradient(NodeId scalar_output, const std::vector<std::string>& wrt,
                          const std::map<std::string, Tensor>& inputs, ExecOptions opts = {}) const;

 private:
  NodeId push(Node node);
  void check_id(NodeId id) const;

  Precision prec_;
  std::shared_ptr<ParamStore> store_;
  std::vector<Node> nodes_;
  std::map<std::string, NodeId> input_nodes_;
  std::map<std::string, NodeId> param_nodes_;
  std::map<std::string, NodeId> output_nodes_;
  std::vector<Tensor> const_values_;
  std::vector<NodeId> const_index_;

  friend class Executor;
};

}  // namespace brave::ad
