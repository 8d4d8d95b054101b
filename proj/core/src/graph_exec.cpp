#include <algorithm>
#include <cmath>
#include <cstring>

#include "brave/error.hpp"
#include "brave/graph.hpp"
#include "brave/threading.hpp"

namespace brave::ad {
namespace {

struct ConvDims {
  int64_t batch, in[3], cin, k[3], cout, out[3], pad[3];
};

ConvDims conv_dims(const Shape& x, const Shape& w, const std::array<int, 3>& stride,
                   const std::string& where) {
  if (x.size() != 5 || w.size() != 5) {
    throw NumericError(where + ": conv3d expects rank-5 input and weight, got " + shape_str(x) +
                       " and " + shape_str(w));
  }
  if (x[4] != w[3]) {
    throw NumericError(where + ": input channels " + std::to_string(x[4]) +
                       " != weight channels " + std::to_string(w[3]));
  }
  ConvDims d{};
  d.batch = x[0];
  for (int i = 0; i < 3; ++i) d.in[i] = x[i + 1];
  d.cin = x[4];
  for (int i = 0; i < 3; ++i) d.k[i] = w[i];
  d.cout = w[4];
  for (int i = 0; i < 3; ++i) {
    int64_t s = stride[i];
    d.out[i] = (d.in[i] + s - 1) / s;
    int64_t total = std::max<int64_t>((d.out[i] - 1) * s + d.k[i] - d.in[i], 0);
    d.pad[i] = total / 2;
  }
  return d;
}

template <typename T>
void conv3d_forward(const ConvDims& d, const std::array<int, 3>& stride, std::span<const T> x,
                    std::span<const T> w, std::span<T> y) {
  const int64_t in12 = d.in[1] * d.in[2];
  const int64_t wtap = d.cin * d.cout;
  parallel_for(d.batch * d.out[0], [&](int64_t lo, int64_t hi) {
    std::vector<T> acc(static_cast<size_t>(d.cout));
    for (int64_t bo = lo; bo < hi; ++bo) {
      const int64_t b = bo / d.out[0];
      const int64_t o0 = bo % d.out[0];
      const T* xb = x.data() + b * d.in[0] * in12 * d.cin;
      for (int64_t o1 = 0; o1 < d.out[1]; ++o1) {
        for (int64_t o2 = 0; o2 < d.out[2]; ++o2) {
          std::fill(acc.begin(), acc.end(), T(0));
          for (int64_t t0 = 0; t0 < d.k[0]; ++t0) {
            const int64_t i0 = o0 * stride[0] - d.pad[0] + t0;
            if (i0 < 0 || i0 >= d.in[0]) continue;
            for (int64_t t1 = 0; t1 < d.k[1]; ++t1) {
              const int64_t i1 = o1 * stride[1] - d.pad[1] + t1;
              if (i1 < 0 || i1 >= d.in[1]) continue;
              for (int64_t t2 = 0; t2 < d.k[2]; ++t2) {
                const int64_t i2 = o2 * stride[2] - d.pad[2] + t2;
                if (i2 < 0 || i2 >= d.in[2]) continue;
                const T* xp = xb + ((i0 * d.in[1] + i1) * d.in[2] + i2) * d.cin;
                const T* wp = w.data() + ((t0 * d.k[1] + t1) * d.k[2] + t2) * wtap;
                for (int64_t ci = 0; ci < d.cin; ++ci) {
                  const T xv = xp[ci];
                  const T* wr = wp + ci * d.cout;
                  for (int64_t co = 0; co < d.cout; ++co) acc[static_cast<size_t>(co)] += xv * wr[co];
                }
              }
            }
          }
          T* yp = y.data() + (((b * d.out[0] + o0) * d.out[1] + o1) * d.out[2] + o2) * d.cout;
          std::copy(acc.begin(), acc.end(), yp);
        }
      }
    }
  });
}

// dX: parallel over batch (each batch slice written by one worker only).
template <typename T>
void conv3d_backward_input(const ConvDims& d, const std::array<int, 3>& stride,
                           std::span<const T> w, std::span<const T> dy, std::span<T> dx) {
  const int64_t wtap = d.cin * d.cout;
  parallel_for(d.batch, [&](int64_t blo, int64_t bhi) {
    for (int64_t b = blo; b < bhi; ++b) {
      T* dxb = dx.data() + b * d.in[0] * d.in[1] * d.in[2] * d.cin;
      const T* dyb = dy.data() + b * d.out[0] * d.out[1] * d.out[2] * d.cout;
      for (int64_t o0 = 0; o0 < d.out[0]; ++o0) {
        for (int64_t o1 = 0; o1 < d.out[1]; ++o1) {
          for (int64_t o2 = 0; o2 < d.out[2]; ++o2) {
            const T* dyp = dyb + ((o0 * d.out[1] + o1) * d.out[2] + o2) * d.cout;
            for (int64_t t0 = 0; t0 < d.k[0]; ++t0) {
              const int64_t i0 = o0 * stride[0] - d.pad[0] + t0;
              if (i0 < 0 || i0 >= d.in[0]) continue;
              for (int64_t t1 = 0; t1 < d.k[1]; ++t1) {
                const int64_t i1 = o1 * stride[1] - d.pad[1] + t1;
                if (i1 < 0 || i1 >= d.in[1]) continue;
                for (int64_t t2 = 0; t2 < d.k[2]; ++t2) {
                  const int64_t i2 = o2 * stride[2] - d.pad[2] + t2;
                  if (i2 < 0 || i2 >= d.in[2]) continue;
                  T* dxp = dxb + ((i0 * d.in[1] + i1) * d.in[2] + i2) * d.cin;
                  const T* wp = w.data() + ((t0 * d.k[1] + t1) * d.k[2] + t2) * wtap;
                  for (int64_t ci = 0; ci < d.cin; ++ci) {
                    const T* wr = wp + ci * d.cout;
                    T s = 0;
                    for (int64_t co = 0; co < d.cout; ++co) s += wr[co] * dyp[co];
                    dxp[ci] += s;
                  }
                }
              }
            }
          }
        }
      }
    }
  });
}

// dW: parallel over kernel taps (each tap's [Cin,Cout] slice is disjoint);
// the inner accumulation runs in fixed batch/position order.
template <typename T>
void conv3d_backward_weight(const ConvDims& d, const std::array<int, 3>& stride,
                            std::span<const T> x, std::span<const T> dy, std::span<T> dw) {
  const int64_t taps = d.k[0] * d.k[1] * d.k[2];
  const int64_t wtap = d.cin * d.cout;
  parallel_for(taps, [&](int64_t tlo, int64_t thi) {
    for (int64_t tap = tlo; tap < thi; ++tap) {
      const int64_t t0 = tap / (d.k[1] * d.k[2]);
      const int64_t t1 = (tap / d.k[2]) % d.k[1];
      const int64_t t2 = tap % d.k[2];
      T* dwp = dw.data() + tap * wtap;
      for (int64_t b = 0; b < d.batch; ++b) {
        const T* xb = x.data() + b * d.in[0] * d.in[1] * d.in[2] * d.cin;
        const T* dyb = dy.data() + b * d.out[0] * d.out[1] * d.out[2] * d.cout;
        for (int64_t o0 = 0; o0 < d.out[0]; ++o0) {
          const int64_t i0 = o0 * stride[0] - d.pad[0] + t0;
          if (i0 < 0 || i0 >= d.in[0]) continue;
          for (int64_t o1 = 0; o1 < d.out[1]; ++o1) {
            const int64_t i1 = o1 * stride[1] - d.pad[1] + t1;
            if (i1 < 0 || i1 >= d.in[1]) continue;
            for (int64_t o2 = 0; o2 < d.out[2]; ++o2) {
              const int64_t i2 = o2 * stride[2] - d.pad[2] + t2;
              if (i2 < 0 || i2 >= d.in[2]) continue;
              const T* xp = xb + ((i0 * d.in[1] + i1) * d.in[2] + i2) * d.cin;
              const T* dyp = dyb + ((o0 * d.out[1] + o1) * d.out[2] + o2) * d.cout;
              for (int64_t ci = 0; ci < d.cin; ++ci) {
                const T xv = xp[ci];
                T* dwr = dwp + ci * d.cout;
                for (int64_t co = 0; co < d.cout; ++co) dwr[co] += xv * dyp[co];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void matmul_nn(int64_t n, int64_t k, int64_t m, std::span<const T> a, std::span<const T> b,
               std::span<T> c) {
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* cr = c.data() + i * m;
      std::fill(cr, cr + m, T(0));
      const T* ar = a.data() + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T av = ar[p];
        const T* br = b.data() + p * m;
        for (int64_t j = 0; j < m; ++j) cr[j] += av * br[j];
      }
    }
  });
}

// c[n,k] += a[n,m] * b[k,m]^T
template <typename T>
void matmul_nt_acc(int64_t n, int64_t m, int64_t k, std::span<const T> a, std::span<const T> b,
                   std::span<T> c) {
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T* ar = a.data() + i * m;
      T* cr = c.data() + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T* br = b.data() + p * m;
        T s = 0;
        for (int64_t j = 0; j < m; ++j) s += ar[j] * br[j];
        cr[p] += s;
      }
    }
  });
}

// c[k,m] += a[n,k]^T * b[n,m]
template <typename T>
void matmul_tn_acc(int64_t n, int64_t k, int64_t m, std::span<const T> a, std::span<const T> b,
                   std::span<T> c) {
  parallel_for(k, [&](int64_t lo, int64_t hi) {
    for (int64_t p = lo; p < hi; ++p) {
      T* cr = c.data() + p * m;
      for (int64_t i = 0; i < n; ++i) {
        const T av = a[i * k + p];
        const T* br = b.data() + i * m;
        for (int64_t j = 0; j < m; ++j) cr[j] += av * br[j];
      }
    }
  });
}

struct BnDims {
  int64_t rows, channels;
};

BnDims bn_dims(const Shape& x, const Shape& scale, const std::string& where) {
  if (x.size() < 2) throw NumericError(where + ": batch_norm needs rank >= 2, got " + shape_str(x));
  if (scale.size() != 1 || scale[0] != x.back()) {
    throw NumericError(where + ": batch_norm scale shape " + shape_str(scale) +
                       " does not match trailing axis of " + shape_str(x));
  }
  int64_t c = x.back();
  return {shape_size(x) / c, c};
}

}  // namespace

// ---------------------------------------------------------------------------
// Executor

class Executor {
 public:
  Executor(const Graph& g, const std::map<std::string, Tensor>& inputs, ExecOptions opts)
      : g_(g), opts_(opts) {
    values_.resize(g.nodes_.size());
    aux_.resize(g.nodes_.size());
    bind_inputs(inputs);
  }

  void forward_all(NodeId upto) {
    for (NodeId id = 0; id <= upto; ++id) forward_node(id);
  }

  ExecResult collect_outputs() const {
    ExecResult r;
    for (const auto& [name, id] : g_.output_nodes_) r.outputs[name] = values_[static_cast<size_t>(id)];
    r.stat_updates = stat_updates_;
    return r;
  }

  const Tensor& value(NodeId id) const { return values_[static_cast<size_t>(id)]; }

  // Reverse pass seeded with d(output)/d(output) = 1.
  std::map<std::string, Tensor> backward(NodeId output, const std::vector<std::string>& wrt) {
    const Tensor& out = values_[static_cast<size_t>(output)];
    if (!out.shape().empty()) {
      throw NumericError("gradient target " + g_.node_desc(output) + " is not a scalar, shape " +
                         shape_str(out.shape()));
    }
    cots_.assign(g_.nodes_.size(), Tensor());
    has_cot_.assign(g_.nodes_.size(), 0);
    cots_[static_cast<size_t>(output)] = Tensor::scalar(1.0, g_.prec_);
    has_cot_[static_cast<size_t>(output)] = 1;
    for (NodeId id = output; id >= 0; --id) {
      if (has_cot_[static_cast<size_t>(id)]) backward_node(id);
    }
    std::map<std::string, Tensor> grads;
    for (const std::string& name : wrt) {
      if (!g_.store_->contains(name)) throw ConfigError("unknown parameter '" + name + "'");
      auto it = g_.param_nodes_.find(name);
      if (it != g_.param_nodes_.end() && has_cot_[static_cast<size_t>(it->second)]) {
        grads[name] = cots_[static_cast<size_t>(it->second)];
      } else {
        // Unreached parameters (e.g. behind stop_gradient) get exact zeros.
        grads[name] = Tensor(g_.store_->get(name).shape(), g_.prec_);
      }
    }
    return grads;
  }

 private:
  void bind_inputs(const std::map<std::string, Tensor>& inputs) {
    for (const auto& [name, t] : inputs) {
      if (!g_.input_nodes_.count(name)) throw ConfigError("graph has no input named '" + name + "'");
    }
    for (const auto& [name, id] : g_.input_nodes_) {
      auto it = inputs.find(name);
      if (it == inputs.end()) throw ConfigError("graph input '" + name + "' is not bound");
      values_[static_cast<size_t>(id)] = it->second.to(g_.prec_);
    }
  }

  [[noreturn]] void fail(NodeId id, const std::string& msg) const {
    throw NumericError(g_.node_desc(id) + ": " + msg);
  }

  const Tensor& in(NodeId id, size_t slot) const {
    return values_[static_cast<size_t>(g_.nodes_[static_cast<size_t>(id)].inputs[slot])];
  }

  void accumulate(NodeId target, Tensor delta) {
    if (!has_cot_[static_cast<size_t>(target)]) {
      cots_[static_cast<size_t>(target)] = std::move(delta);
      has_cot_[static_cast<size_t>(target)] = 1;
      return;
    }
    Tensor& c = cots_[static_cast<size_t>(target)];
    dispatch(g_.prec_, [&](auto tag) {
      using T = decltype(tag);
      auto cd = c.data<T>();
      auto dd = delta.data<T>();
      for (size_t i = 0; i < cd.size(); ++i) cd[i] += dd[i];
    });
  }

  void forward_node(NodeId id);
  void backward_node(NodeId id);
  size_t const_slot(NodeId id) const {
    for (size_t i = 0; i < g_.const_index_.size(); ++i) {
      if (g_.const_index_[i] == id) return i;
    }
    throw NumericError("constant value missing for " + g_.node_desc(id));
  }

  const Graph& g_;
  ExecOptions opts_;
  std::vector<Tensor> values_;
  std::vector<Tensor> aux_;  // batch-norm saved statistics
  std::vector<Tensor> cots_;
  std::vector<char> has_cot_;
  std::vector<std::pair<std::string, Tensor>> stat_updates_;
};

void Executor::forward_node(NodeId id) {
  const Node& n = g_.nodes_[static_cast<size_t>(id)];
  Tensor& out = values_[static_cast<size_t>(id)];
  if (opts_.pinned != nullptr) {
    auto it = opts_.pinned->find(id);
    if (it != opts_.pinned->end()) {
      out = it->second.to(g_.prec_);
      return;
    }
  }
  switch (n.op) {
    case Op::kInput:
      return;  // bound at construction
    case Op::kParam:
      out = g_.store_->get(n.label).to(g_.prec_);
      return;
    case Op::kConstant:
      out = g_.const_values_[const_slot(id)];
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = in(id, 0);
      const Tensor& b = in(id, 1);
      if (a.shape() != b.shape()) {
        fail(id, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
      }
      out = Tensor(a.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto av = a.data<T>();
        auto bv = b.data<T>();
        auto ov = out.data<T>();
        if (n.op == Op::kAdd) {
          for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        } else if (n.op == Op::kSub) {
          for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
        } else {
          for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
        }
      });
      return;
    }
    case Op::kScale: {
      const Tensor& a = in(id, 0);
      out = Tensor(a.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto av = a.data<T>();
        auto ov = out.data<T>();
        const T c = static_cast<T>(n.scalar);
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
      });
      return;
    }
    case Op::kAddBias: {
      const Tensor& x = in(id, 0);
      const Tensor& b = in(id, 1);
      if (x.rank() < 1 || b.rank() != 1 || x.shape().back() != b.dim(0)) {
        fail(id, "bias shape " + shape_str(b.shape()) + " does not match " + shape_str(x.shape()));
      }
      out = Tensor(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto bv = b.data<T>();
        auto ov = out.data<T>();
        const size_t f = bv.size();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + bv[i % f];
      });
      return;
    }
    case Op::kMatmul: {
      const Tensor& a = in(id, 0);
      const Tensor& b = in(id, 1);
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        fail(id, "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
      }
      out = Tensor({a.dim(0), b.dim(1)}, g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        matmul_nn<T>(a.dim(0), a.dim(1), b.dim(1), a.data<T>(), b.data<T>(), out.data<T>());
      });
      return;
    }
    case Op::kConv3d: {
      const Tensor& x = in(id, 0);
      const Tensor& w = in(id, 1);
      ConvDims d = conv_dims(x.shape(), w.shape(), n.stride, g_.node_desc(id));
      out = Tensor({d.batch, d.out[0], d.out[1], d.out[2], d.cout}, g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        conv3d_forward<T>(d, n.stride, x.data<T>(), w.data<T>(), out.data<T>());
      });
      return;
    }
    case Op::kRelu: {
      const Tensor& x = in(id, 0);
      out = Tensor(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
      });
      return;
    }
    case Op::kBatchNorm: {
      const Tensor& x = in(id, 0);
      const Tensor& sc = in(id, 1);
      const Tensor& of = in(id, 2);
      BnDims d = bn_dims(x.shape(), sc.shape(), g_.node_desc(id));
      if (of.shape() != sc.shape()) fail(id, "offset/scale shape mismatch");
      out = Tensor(x.shape(), g_.prec_);
      Tensor stats({2, d.channels}, g_.prec_);  // row 0 mean, row 1 var
      if (opts_.training) {
        dispatch(g_.prec_, [&](auto tag) {
          using T = decltype(tag);
          auto xv = x.data<T>();
          auto sv = stats.data<T>();
          const int64_t C = d.channels;
          for (int64_t c = 0; c < C; ++c) {
            T m = 0;
            for (int64_t r = 0; r < d.rows; ++r) m += xv[r * C + c];
            m /= static_cast<T>(d.rows);
            T v = 0;
            for (int64_t r = 0; r < d.rows; ++r) {
              const T dv = xv[r * C + c] - m;
              v += dv * dv;
            }
            v /= static_cast<T>(d.rows);
            sv[c] = m;
            sv[C + c] = v;
          }
        });
        // Fold into running statistics; committed by the caller after the step.
        const Tensor& rm = g_.store_->get(n.buffer_prefix + ".bn_running_mean");
        const Tensor& rv = g_.store_->get(n.buffer_prefix + ".bn_running_var");
        Tensor new_rm(rm.shape(), g_.prec_);
        Tensor new_rv(rv.shape(), g_.prec_);
        for (int64_t c = 0; c < d.channels; ++c) {
          new_rm.set(c, n.decay * rm.at(c) + (1.0 - n.decay) * stats.at(c));
          new_rv.set(c, n.decay * rv.at(c) + (1.0 - n.decay) * stats.at(d.channels + c));
        }
        stat_updates_.emplace_back(n.buffer_prefix + ".bn_running_mean", std::move(new_rm));
        stat_updates_.emplace_back(n.buffer_prefix + ".bn_running_var", std::move(new_rv));
      } else {
        const Tensor& rm = g_.store_->get(n.buffer_prefix + ".bn_running_mean");
        const Tensor& rv = g_.store_->get(n.buffer_prefix + ".bn_running_var");
        for (int64_t c = 0; c < d.channels; ++c) {
          stats.set(c, rm.at(c));
          stats.set(d.channels + c, rv.at(c));
        }
      }
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto sv = stats.data<T>();
        auto scv = sc.data<T>();
        auto ofv = of.data<T>();
        auto ov = out.data<T>();
        const int64_t C = d.channels;
        for (int64_t r = 0; r < d.rows; ++r) {
          for (int64_t c = 0; c < C; ++c) {
            const T inv = T(1) / std::sqrt(sv[C + c] + static_cast<T>(n.eps));
            ov[r * C + c] = scv[c] * (xv[r * C + c] - sv[c]) * inv + ofv[c];
          }
        }
      });
      aux_[static_cast<size_t>(id)] = std::move(stats);
      return;
    }
    case Op::kGlobalMeanPool: {
      const Tensor& x = in(id, 0);
      if (x.rank() != 5) fail(id, "expects rank-5 input, got " + shape_str(x.shape()));
      const int64_t B = x.dim(0), C = x.dim(4);
      const int64_t vol = x.dim(1) * x.dim(2) * x.dim(3);
      out = Tensor({B, C}, g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (int64_t b = 0; b < B; ++b) {
          const T* xb = xv.data() + b * vol * C;
          T* ob = ov.data() + b * C;
          std::fill(ob, ob + C, T(0));
          for (int64_t p = 0; p < vol; ++p) {
            const T* xp = xb + p * C;
            for (int64_t c = 0; c < C; ++c) ob[c] += xp[c];
          }
          for (int64_t c = 0; c < C; ++c) ob[c] /= static_cast<T>(vol);
        }
      });
      return;
    }
    case Op::kRowSum: {
      const Tensor& x = in(id, 0);
      if (x.rank() != 2) fail(id, "expects rank-2 input, got " + shape_str(x.shape()));
      const int64_t N = x.dim(0), F = x.dim(1);
      out = Tensor({N}, g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (int64_t r = 0; r < N; ++r) {
          T s = 0;
          for (int64_t c = 0; c < F; ++c) s += xv[r * F + c];
          ov[r] = s;
        }
      });
      return;
    }
    case Op::kMeanAll:
    case Op::kSumAll: {
      const Tensor& x = in(id, 0);
      out = Tensor(Shape{}, g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        T s = 0;
        for (size_t i = 0; i < xv.size(); ++i) s += xv[i];
        if (n.op == Op::kMeanAll) s /= static_cast<T>(x.size());
        out.data<T>()[0] = s;
      });
      return;
    }
    case Op::kSquare: {
      const Tensor& x = in(id, 0);
      out = Tensor(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * xv[i];
      });
      return;
    }
    case Op::kSqrt: {
      const Tensor& x = in(id, 0);
      out = Tensor(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) {
          if (xv[i] < T(0)) fail(id, "sqrt of negative value");
          ov[i] = std::sqrt(xv[i]);
        }
      });
      return;
    }
    case Op::kL2NormalizeRows: {
      const Tensor& x = in(id, 0);
      if (x.rank() != 1 && x.rank() != 2) {
        fail(id, "expects rank-1 or rank-2 input, got " + shape_str(x.shape()));
      }
      const int64_t F = x.shape().back();
      const int64_t N = x.size() / F;
      out = Tensor(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto ov = out.data<T>();
        for (int64_t r = 0; r < N; ++r) {
          T ss = 0;
          for (int64_t c = 0; c < F; ++c) ss += xv[r * F + c] * xv[r * F + c];
          const T norm = std::sqrt(ss);
          const T denom = std::max(norm, static_cast<T>(n.eps));
          for (int64_t c = 0; c < F; ++c) ov[r * F + c] = xv[r * F + c] / denom;
        }
      });
      return;
    }
    case Op::kStopGradient:
      out = in(id, 0);  // forward identity, bitwise
      return;
  }
}

void Executor::backward_node(NodeId id) {
  const Node& n = g_.nodes_[static_cast<size_t>(id)];
  const Tensor& cot = cots_[static_cast<size_t>(id)];
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
    case Op::kConstant:
    case Op::kStopGradient:
      return;  // leaves keep their cotangent; stop_gradient drops it
    case Op::kAdd:
      accumulate(n.inputs[0], cot);
      accumulate(n.inputs[1], cot);
      return;
    case Op::kSub: {
      accumulate(n.inputs[0], cot);
      Tensor neg(cot.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto nv = neg.data<T>();
        for (size_t i = 0; i < nv.size(); ++i) nv[i] = -cv[i];
      });
      accumulate(n.inputs[1], std::move(neg));
      return;
    }
    case Op::kMul: {
      const Tensor& a = in(id, 0);
      const Tensor& b = in(id, 1);
      Tensor da(a.shape(), g_.prec_);
      Tensor db(b.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto av = a.data<T>();
        auto bv = b.data<T>();
        auto dav = da.data<T>();
        auto dbv = db.data<T>();
        for (size_t i = 0; i < cv.size(); ++i) {
          dav[i] = cv[i] * bv[i];
          dbv[i] = cv[i] * av[i];
        }
      });
      accumulate(n.inputs[0], std::move(da));
      accumulate(n.inputs[1], std::move(db));
      return;
    }
    case Op::kScale: {
      Tensor dx(cot.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        const T c = static_cast<T>(n.scalar);
        for (size_t i = 0; i < dv.size(); ++i) dv[i] = cv[i] * c;
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kAddBias: {
      accumulate(n.inputs[0], cot);
      const Tensor& b = in(id, 1);
      Tensor db(b.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto dv = db.data<T>();
        const size_t f = dv.size();
        for (size_t i = 0; i < cv.size(); ++i) dv[i % f] += cv[i];
      });
      accumulate(n.inputs[1], std::move(db));
      return;
    }
    case Op::kMatmul: {
      const Tensor& a = in(id, 0);
      const Tensor& b = in(id, 1);
      Tensor da(a.shape(), g_.prec_);
      Tensor db(b.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        // dA = dC * B^T, dB = A^T * dC
        matmul_nt_acc<T>(a.dim(0), b.dim(1), a.dim(1), cot.data<T>(), b.data<T>(), da.data<T>());
        matmul_tn_acc<T>(a.dim(0), a.dim(1), b.dim(1), a.data<T>(), cot.data<T>(), db.data<T>());
      });
      accumulate(n.inputs[0], std::move(da));
      accumulate(n.inputs[1], std::move(db));
      return;
    }
    case Op::kConv3d: {
      const Tensor& x = in(id, 0);
      const Tensor& w = in(id, 1);
      ConvDims d = conv_dims(x.shape(), w.shape(), n.stride, g_.node_desc(id));
      Tensor dx(x.shape(), g_.prec_);
      Tensor dw(w.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        conv3d_backward_input<T>(d, n.stride, w.data<T>(), cot.data<T>(), dx.data<T>());
        conv3d_backward_weight<T>(d, n.stride, x.data<T>(), cot.data<T>(), dw.data<T>());
      });
      accumulate(n.inputs[0], std::move(dx));
      accumulate(n.inputs[1], std::move(dw));
      return;
    }
    case Op::kRelu: {
      const Tensor& x = in(id, 0);
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        for (size_t i = 0; i < dv.size(); ++i) dv[i] = xv[i] > T(0) ? cv[i] : T(0);
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kBatchNorm: {
      const Tensor& x = in(id, 0);
      const Tensor& sc = in(id, 1);
      const Tensor& stats = aux_[static_cast<size_t>(id)];
      BnDims d = bn_dims(x.shape(), sc.shape(), g_.node_desc(id));
      Tensor dx(x.shape(), g_.prec_);
      Tensor dsc(sc.shape(), g_.prec_);
      Tensor dof(sc.shape(), g_.prec_);
      const bool batch_stats = opts_.training;
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto sv = stats.data<T>();
        auto scv = sc.data<T>();
        auto cv = cot.data<T>();
        auto dxv = dx.data<T>();
        auto dscv = dsc.data<T>();
        auto dofv = dof.data<T>();
        const int64_t C = d.channels;
        const int64_t R = d.rows;
        for (int64_t c = 0; c < C; ++c) {
          const T mean = sv[c];
          const T inv = T(1) / std::sqrt(sv[C + c] + static_cast<T>(n.eps));
          T sum_dy = 0, sum_dy_xhat = 0;
          for (int64_t r = 0; r < R; ++r) {
            const T xhat = (xv[r * C + c] - mean) * inv;
            const T dy = cv[r * C + c];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat;
          }
          dscv[c] = sum_dy_xhat;
          dofv[c] = sum_dy;
          if (batch_stats) {
            const T mdy = sum_dy / static_cast<T>(R);
            const T mdyx = sum_dy_xhat / static_cast<T>(R);
            for (int64_t r = 0; r < R; ++r) {
              const T xhat = (xv[r * C + c] - mean) * inv;
              dxv[r * C + c] = scv[c] * inv * (cv[r * C + c] - mdy - xhat * mdyx);
            }
          } else {
            // Inference statistics are constants; the op is affine in x.
            for (int64_t r = 0; r < R; ++r) dxv[r * C + c] = scv[c] * inv * cv[r * C + c];
          }
        }
      });
      accumulate(n.inputs[0], std::move(dx));
      accumulate(n.inputs[1], std::move(dsc));
      accumulate(n.inputs[2], std::move(dof));
      return;
    }
    case Op::kGlobalMeanPool: {
      const Tensor& x = in(id, 0);
      const int64_t B = x.dim(0), C = x.dim(4);
      const int64_t vol = x.dim(1) * x.dim(2) * x.dim(3);
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t p = 0; p < vol; ++p) {
            for (int64_t c = 0; c < C; ++c) {
              dv[(b * vol + p) * C + c] = cv[b * C + c] / static_cast<T>(vol);
            }
          }
        }
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kRowSum: {
      const Tensor& x = in(id, 0);
      const int64_t N = x.dim(0), F = x.dim(1);
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        for (int64_t r = 0; r < N; ++r) {
          for (int64_t c = 0; c < F; ++c) dv[r * F + c] = cv[r];
        }
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kMeanAll:
    case Op::kSumAll: {
      const Tensor& x = in(id, 0);
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        const T c0 = cot.data<T>()[0];
        const T g = n.op == Op::kMeanAll ? c0 / static_cast<T>(x.size()) : c0;
        auto dv = dx.data<T>();
        for (size_t i = 0; i < dv.size(); ++i) dv[i] = g;
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kSquare: {
      const Tensor& x = in(id, 0);
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        for (size_t i = 0; i < dv.size(); ++i) dv[i] = T(2) * xv[i] * cv[i];
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kSqrt: {
      const Tensor& y = values_[static_cast<size_t>(id)];
      Tensor dx(y.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto yv = y.data<T>();
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        // Subgradient 0 at the origin.
        for (size_t i = 0; i < dv.size(); ++i) dv[i] = yv[i] > T(0) ? cv[i] / (T(2) * yv[i]) : T(0);
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
    case Op::kL2NormalizeRows: {
      const Tensor& x = in(id, 0);
      const Tensor& y = values_[static_cast<size_t>(id)];
      const int64_t F = x.shape().back();
      const int64_t N = x.size() / F;
      Tensor dx(x.shape(), g_.prec_);
      dispatch(g_.prec_, [&](auto tag) {
        using T = decltype(tag);
        auto xv = x.data<T>();
        auto yv = y.data<T>();
        auto cv = cot.data<T>();
        auto dv = dx.data<T>();
        for (int64_t r = 0; r < N; ++r) {
          T ss = 0;
          for (int64_t c = 0; c < F; ++c) ss += xv[r * F + c] * xv[r * F + c];
          const T norm = std::sqrt(ss);
          const T eps = static_cast<T>(n.eps);
          if (norm > eps) {
            T dot = 0;
            for (int64_t c = 0; c < F; ++c) dot += yv[r * F + c] * cv[r * F + c];
            for (int64_t c = 0; c < F; ++c) {
              dv[r * F + c] = (cv[r * F + c] - yv[r * F + c] * dot) / norm;
            }
          } else {
            // Clamped denominator acts as a constant.
            for (int64_t c = 0; c < F; ++c) dv[r * F + c] = cv[r * F + c] / eps;
          }
        }
      });
      accumulate(n.inputs[0], std::move(dx));
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Public entry points

ExecResult Graph::evaluate(const std::map<std::string, Tensor>& inputs, ExecOptions opts) const {
  if (output_nodes_.empty()) throw ConfigError("graph has no marked outputs");
  Executor ex(*this, inputs, opts);
  NodeId last = 0;
  for (const auto& [_, id] : output_nodes_) last = std::max(last, id);
  ex.forward_all(last);
  return ex.collect_outputs();
}

std::vector<NodeId> Graph::nodes_of_op(Op op) const {
  std::vector<NodeId> out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == op) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

std::map<NodeId, Tensor> Graph::capture(const std::map<std::string, Tensor>& inputs,
                                        const std::vector<NodeId>& ids, ExecOptions opts) const {
  Executor ex(*this, inputs, opts);
  NodeId last = 0;
  for (NodeId id : ids) {
    check_id(id);
    last = std::max(last, id);
  }
  ex.forward_all(last);
  std::map<NodeId, Tensor> out;
  for (NodeId id : ids) out[id] = ex.value(id);
  return out;
}

GradientResult Graph::gradient(NodeId scalar_output, const std::vector<std::string>& wrt,
                               const std::map<std::string, Tensor>& inputs, ExecOptions opts) const {
  check_id(scalar_output);
  Executor ex(*this, inputs, opts);
  NodeId last = scalar_output;
  for (const auto& [_, id] : output_nodes_) last = std::max(last, id);
  ex.forward_all(last);
  GradientResult r;
  r.grads = ex.backward(scalar_output, wrt);
  r.forward = ex.collect_outputs();
  r.output_value = ex.value(scalar_output).at(0);
  return r;
}

}  // namespace brave::ad
