#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reverbdoa/errors.hpp"
#include "reverbdoa/ops.hpp"
#include "reverbdoa/tensor.hpp"

namespace reverbdoa {

enum class Activation { relu, softmax, identity };

// Reverse-mode tape. Operations append nodes holding the forward value and a
// backprop closure; backward() walks the nodes in reverse creation order and
// accumulates gradients. Nodes whose inputs carry no gradient get no closure,
// so constant subgraphs cost nothing on the backward pass.
//
// Values are looked up through the tape at backward time rather than captured,
// so do not hold references returned by value()/grad() across node creation.
class Tape {
 public:
  using NodeId = int;

  struct Options {
    // Checked mode additionally verifies that every produced value is finite
    // and that gradient shapes agree during backward.
    bool checked = false;
  };

  Tape() = default;
  explicit Tape(Options opt) : opt_(opt) {}

  bool checked() const { return opt_.checked; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Drops every node from index size onward along with any gradients. Lets a
  // caller keep long-lived leaves (parameters) while rebuilding the graph on
  // top of them for each input.
  void truncate(int size) {
    if (size < 0 || size > this->size()) {
      throw contract_error("tape truncate: size out of range");
    }
    nodes_.resize(static_cast<std::size_t>(size));
    grads_.clear();
  }

  NodeId leaf(Tensor t, bool requires_grad) {
    t.requires_grad = requires_grad;
    return push(std::move(t), requires_grad, nullptr);
  }

  NodeId constant(Tensor t) { return leaf(std::move(t), false); }

  const Tensor& value(NodeId id) const { return node(id).value; }

  // Gradient of the last backward() target with respect to node id. Zeros if
  // the node is off the gradient path.
  const Tensor& grad(NodeId id) {
    check_id(id);
    if (grads_.empty()) {
      throw contract_error("tape: grad() before backward()");
    }
    return grad_buf(id);
  }

  const std::vector<int>& pool_indices(NodeId id) const {
    if (!node(id).pool_idx) {
      throw contract_error("tape: node has no pooling indices");
    }
    return *node(id).pool_idx;
  }

  // ---- elementwise and structural operations ----

  NodeId add(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "tape add");
    Tensor y = value(a);
    const Tensor& vb = value(b);
    for (int i = 0; i < y.numel(); ++i) y[i] += vb[i];
    return push(std::move(y), needs(a) || needs(b),
                [a, b](Tape& t, const Tensor& g) {
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
  }

  // n-ary sum of same-shape nodes; one node instead of a chain of adds.
  NodeId add_n(const std::vector<NodeId>& ids) {
    if (ids.empty()) throw contract_error("tape add_n: no inputs");
    Tensor y = value(ids[0]);
    bool ng = needs(ids[0]);
    for (std::size_t k = 1; k < ids.size(); ++k) {
      const Tensor& v = value(ids[k]);
      require_same_shape(y, v, "tape add_n");
      for (int i = 0; i < y.numel(); ++i) y[i] += v[i];
      ng = ng || needs(ids[k]);
    }
    return push(std::move(y), ng, [ids](Tape& t, const Tensor& g) {
      for (NodeId id : ids) t.accumulate(id, g);
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    require_same_shape(value(a), value(b), "tape mul");
    Tensor y = value(a);
    const Tensor& vb = value(b);
    for (int i = 0; i < y.numel(); ++i) y[i] *= vb[i];
    return push(std::move(y), needs(a) || needs(b),
                [a, b](Tape& t, const Tensor& g) {
                  if (t.needs(a)) {
                    Tensor& ga = t.grad_buf(a);
                    const Tensor& vb = t.value(b);
                    for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
                  }
                  if (t.needs(b)) {
                    Tensor& gb = t.grad_buf(b);
                    const Tensor& va = t.value(a);
                    for (int i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
                  }
                });
  }

  NodeId scale(NodeId a, double k) {
    Tensor y = value(a);
    for (double& v : y.values) v *= k;
    return push(std::move(y), needs(a), [a, k](Tape& t, const Tensor& g) {
      Tensor& ga = t.grad_buf(a);
      for (int i = 0; i < g.numel(); ++i) ga[i] += k * g[i];
    });
  }

  NodeId add_scalar(NodeId a, double k) {
    Tensor y = value(a);
    for (double& v : y.values) v += k;
    return push(std::move(y), needs(a),
                [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
  }

  NodeId sum(NodeId a) {
    double s = 0.0;
    for (double v : value(a).values) s += v;
    return push(Tensor::scalar(s), needs(a), [a](Tape& t, const Tensor& g) {
      Tensor& ga = t.grad_buf(a);
      for (double& v : ga.values) v += g[0];
    });
  }

  NodeId log_guarded(NodeId a, double guard) {
    Tensor y = value(a);
    for (double& v : y.values) {
      if (v + guard <= 0.0) {
        throw domain_error("tape log_guarded: argument not positive");
      }
      v = std::log(v + guard);
    }
    return push(std::move(y), needs(a), [a, guard](Tape& t, const Tensor& g) {
      Tensor& ga = t.grad_buf(a);
      const Tensor& va = t.value(a);
      for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] / (va[i] + guard);
    });
  }

  NodeId exp(NodeId a) {
    Tensor y = value(a);
    for (double& v : y.values) v = std::exp(v);
    NodeId out = push(std::move(y), needs(a), nullptr);
    if (needs(a)) {
      node(out).backprop = [a, out](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buf(a);
        const Tensor& vy = t.value(out);
        for (int i = 0; i < g.numel(); ++i) ga[i] += g[i] * vy[i];
      };
    }
    return out;
  }

  // Concatenation of flattened inputs into a vector node.
  NodeId concat(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    Tensor y({va.numel() + vb.numel()});
    std::copy(va.values.begin(), va.values.end(), y.values.begin());
    std::copy(vb.values.begin(), vb.values.end(),
              y.values.begin() + va.numel());
    const int na = va.numel();
    return push(std::move(y), needs(a) || needs(b),
                [a, b, na](Tape& t, const Tensor& g) {
                  if (t.needs(a)) {
                    Tensor& ga = t.grad_buf(a);
                    for (int i = 0; i < na; ++i) ga[i] += g[i];
                  }
                  if (t.needs(b)) {
                    Tensor& gb = t.grad_buf(b);
                    for (int i = 0; i < g.numel() - na; ++i) {
                      gb[i] += g[na + i];
                    }
                  }
                });
  }

  NodeId slice(NodeId a, int start, int len) {
    const Tensor& va = value(a);
    if (start < 0 || len <= 0 || start + len > va.numel()) {
      throw dimension_error("tape slice: range [" + std::to_string(start) +
                            ", " + std::to_string(start + len) +
                            ") outside " + va.shape_str());
    }
    Tensor y({len});
    std::copy(va.values.begin() + start, va.values.begin() + start + len,
              y.values.begin());
    return push(std::move(y), needs(a), [a, start](Tape& t, const Tensor& g) {
      Tensor& ga = t.grad_buf(a);
      for (int i = 0; i < g.numel(); ++i) ga[start + i] += g[i];
    });
  }

  NodeId reshape(NodeId a, std::vector<int> shape) {
    const Tensor& va = value(a);
    Tensor y(shape, va.values);
    return push(std::move(y), needs(a),
                [a](Tape& t, const Tensor& g) { t.accumulate_flat(a, g); });
  }

  // ---- network operations ----

  NodeId dense(NodeId x, NodeId w, NodeId b) {
    Tensor y = dense_forward(value(x), value(w), value(b));
    return push(std::move(y), needs(x) || needs(w) || needs(b),
                [x, w, b](Tape& t, const Tensor& g) {
                  dense_backward(t.value(x), t.value(w), g,
                                 t.grad_ptr(x), t.grad_ptr(w), t.grad_ptr(b));
                });
  }

  NodeId conv2d(NodeId x, NodeId w, NodeId b, int pad = 1) {
    Tensor y = conv2d_forward(value(x), value(w), value(b), pad);
    return push(std::move(y), needs(x) || needs(w) || needs(b),
                [x, w, b, pad](Tape& t, const Tensor& g) {
                  conv2d_backward(t.value(x), t.value(w), g, pad,
                                  t.grad_ptr(x), t.grad_ptr(w), t.grad_ptr(b));
                });
  }

  NodeId transpose_conv2d(NodeId x, NodeId w, NodeId b, int pad = 1) {
    Tensor y = transpose_conv2d_forward(value(x), value(w), value(b), pad);
    return push(std::move(y), needs(x) || needs(w) || needs(b),
                [x, w, b, pad](Tape& t, const Tensor& g) {
                  transpose_conv2d_backward(t.value(x), t.value(w), g, pad,
                                            t.grad_ptr(x), t.grad_ptr(w),
                                            t.grad_ptr(b));
                });
  }

  NodeId max_pool2d(NodeId x) {
    PoolResult r = max_pool2d_forward(value(x));
    auto idx = std::make_shared<std::vector<int>>(std::move(r.argmax));
    NodeId out = push(std::move(r.values), needs(x),
                      [x, idx](Tape& t, const Tensor& g) {
                        if (t.needs(x)) {
                          max_pool2d_backward(*idx, g, &t.grad_buf(x));
                        }
                      });
    node(out).pool_idx = idx;
    return out;
  }

  NodeId max_unpool2d(NodeId x) {
    Tensor y = max_unpool2d_forward(value(x));
    return push(std::move(y), needs(x), [x](Tape& t, const Tensor& g) {
      if (t.needs(x)) max_unpool2d_backward(g, &t.grad_buf(x));
    });
  }

  NodeId relu(NodeId x) {
    Tensor y = relu_forward(value(x));
    return push(std::move(y), needs(x), [x](Tape& t, const Tensor& g) {
      if (t.needs(x)) relu_backward(t.value(x), g, &t.grad_buf(x));
    });
  }

  NodeId softmax(NodeId x) {
    Tensor y = softmax_forward(value(x));
    NodeId out = push(std::move(y), needs(x), nullptr);
    if (needs(x)) {
      node(out).backprop = [x, out](Tape& t, const Tensor& g) {
        softmax_backward(t.value(out), g, &t.grad_buf(x));
      };
    }
    return out;
  }

  NodeId activation(Activation kind, NodeId x) {
    switch (kind) {
      case Activation::relu:
        return relu(x);
      case Activation::softmax:
        return softmax(x);
      case Activation::identity:
        return x;
    }
    throw contract_error("tape: unknown activation");
  }

  NodeId gaussian_log_prob(NodeId x, NodeId mu, NodeId var) {
    double v = gaussian_log_prob_forward(value(x), value(mu), value(var));
    return push(Tensor::scalar(v), needs(x) || needs(mu) || needs(var),
                [x, mu, var](Tape& t, const Tensor& g) {
                  gaussian_log_prob_backward(t.value(x), t.value(mu),
                                             t.value(var), g[0], t.grad_ptr(x),
                                             t.grad_ptr(mu), t.grad_ptr(var));
                });
  }

  NodeId categorical_log_prob(int y, NodeId pi, double guard = 1e-12) {
    double v = categorical_log_prob_forward(y, value(pi), guard);
    return push(Tensor::scalar(v), needs(pi),
                [y, pi, guard](Tape& t, const Tensor& g) {
                  if (t.needs(pi)) {
                    categorical_log_prob_backward(y, t.value(pi), guard, g[0],
                                                  &t.grad_buf(pi));
                  }
                });
  }

  NodeId reparameterize(NodeId mu, NodeId var, Tensor eps) {
    Tensor z = reparameterize_forward(value(mu), value(var), eps);
    return push(std::move(z), needs(mu) || needs(var),
                [mu, var, e = std::move(eps)](Tape& t, const Tensor& g) {
                  reparameterize_backward(t.value(var), e, g, t.grad_ptr(mu),
                                          t.grad_ptr(var));
                });
  }

  // ---- backward ----

  void backward(NodeId loss) {
    check_id(loss);
    if (value(loss).numel() != 1) {
      throw contract_error("tape backward: loss must be scalar, got " +
                           value(loss).shape_str());
    }
    grads_.clear();
    grads_.resize(nodes_.size());
    grad_buf(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || !n.backprop) continue;
      Tensor& g = grads_[static_cast<std::size_t>(id)];
      if (g.values.empty()) continue;  // off the gradient path
      if (opt_.checked && !g.same_shape(n.value)) {
        throw dimension_error("tape backward: gradient shape " +
                              g.shape_str() + " vs value " +
                              n.value.shape_str());
      }
      n.backprop(*this, g);
    }
    if (opt_.checked) {
      for (const Tensor& g : grads_) {
        if (!g.values.empty()) require_finite(g, "tape backward");
      }
    }
  }

  bool needs(NodeId id) const { return node(id).needs_grad; }

  Tensor& grad_buf(NodeId id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.values.empty()) g = Tensor(node(id).value.shape);
    return g;
  }

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    std::function<void(Tape&, const Tensor&)> backprop;
    std::shared_ptr<std::vector<int>> pool_idx;
  };

  Tensor* grad_ptr(NodeId id) { return needs(id) ? &grad_buf(id) : nullptr; }

  void accumulate(NodeId id, const Tensor& g) {
    if (!needs(id)) return;
    Tensor& ga = grad_buf(id);
    for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }

  // Accumulate ignoring shape (used by reshape).
  void accumulate_flat(NodeId id, const Tensor& g) {
    if (!needs(id)) return;
    Tensor& ga = grad_buf(id);
    for (int i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }

  NodeId push(Tensor value, bool needs_grad,
              std::function<void(Tape&, const Tensor&)> bp) {
    if (opt_.checked) require_finite(value, "tape forward");
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backprop = std::move(bp);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  Node& node(NodeId id) {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)];
  }

  void check_id(NodeId id) const {
    if (id < 0 || id >= size()) {
      throw contract_error("tape: invalid node id " + std::to_string(id));
    }
  }

  Options opt_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace reverbdoa
