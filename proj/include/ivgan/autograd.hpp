#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "ivgan/conv.hpp"
#include "ivgan/tensor.hpp"

namespace ivgan {

template <typename T>
class Var;

namespace detail {
inline uint64_t next_seq() {
  static std::atomic<uint64_t> c{1};
  return c.fetch_add(1);
}
inline uint64_t next_tape_id() {
  static std::atomic<uint64_t> c{1};
  return c.fetch_add(1);
}
}  // namespace detail

// One node of the computation DAG. The backward rule receives the upstream
// gradient as a Var and emits parent gradients as graph operations, so a
// gradient is itself differentiable (double backward).
template <typename T>
struct Node {
  using Backward = std::function<std::vector<Var<T>>(
      const Var<T>& gy, const std::vector<Var<T>>& parents,
      const std::vector<char>& need)>;

  Tensor<T> value;
  std::vector<Var<T>> parents;
  Backward backward;  // empty for leaves and constants
  bool requires_grad = false;
  uint64_t tape_id = 0;  // 0: constant, compatible with any tape
  uint64_t seq = 0;
  const char* op = "leaf";
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> value, bool requires_grad = true,
                  uint64_t tape_id = 0) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->tape_id = tape_id;
    n->seq = detail::next_seq();
    return Var(std::move(n));
  }

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var scalar(T v) { return constant(Tensor<T>::scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  Node<T>* node() const { return node_.get(); }
  std::shared_ptr<Node<T>> node_ptr() const { return node_; }

  T item() const {
    if (node_->value.numel() != 1)
      throw std::invalid_argument("item: tensor is not scalar");
    return node_->value[0];
  }

  // value-only copy, cut off from the graph
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Groups leaves of one computation graph; operations refuse to combine
// leaves of different tapes.
template <typename T>
class Tape {
 public:
  Tape() : id_(detail::next_tape_id()) {}
  uint64_t id() const { return id_; }
  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    return Var<T>::leaf(std::move(value), requires_grad, id_);
  }

 private:
  uint64_t id_;
};

namespace detail {

template <typename T>
Var<T> make_op(const char* op, Tensor<T> value, std::vector<Var<T>> parents,
               typename Node<T>::Backward backward) {
  auto n = std::make_shared<Node<T>>();
  n->op = op;
  n->value = std::move(value);
  bool rg = false;
  uint64_t tape = 0;
  for (const auto& p : parents) {
    rg = rg || p.requires_grad();
    uint64_t pt = p.node()->tape_id;
    if (pt != 0) {
      if (tape != 0 && tape != pt)
        throw std::invalid_argument(std::string(op) +
                                    ": operands belong to different tapes");
      tape = pt;
    }
  }
  n->parents = std::move(parents);
  n->requires_grad = rg;
  n->tape_id = tape;
  n->seq = next_seq();
  if (rg) n->backward = std::move(backward);
  return Var<T>(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// differentiable ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape);
template <typename T>
Var<T> reduce_sum(const Var<T>& a, const std::vector<int64_t>& axes,
                  bool keepdims = false);
template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& shape);

// Reduce gy down to `shape`; inverse of scalar/axis broadcasting.
template <typename T>
Var<T> sum_to(const Var<T>& gy, const Shape& shape) {
  if (gy.shape() == shape) return gy;
  if (numel(shape) == 1) {
    std::vector<int64_t> axes(gy.shape().size());
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = int64_t(i);
    return reshape(reduce_sum(gy, axes), shape);
  }
  std::vector<int64_t> axes;
  for (size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 1 && gy.shape()[i] != 1) axes.push_back(int64_t(i));
  return reshape(reduce_sum(gy, axes, true), shape);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "add", add(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = sum_to(gy, ps[0].shape());
        if (need[1]) g[1] = sum_to(gy, ps[1].shape());
        return g;
      });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "sub", sub(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = sum_to(gy, ps[0].shape());
        if (need[1]) g[1] = neg(sum_to(gy, ps[1].shape()));
        return g;
      });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "mul", mul(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = sum_to(mul(gy, ps[1]), ps[0].shape());
        if (need[1]) g[1] = sum_to(mul(gy, ps[0]), ps[1].shape());
        return g;
      });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "div", div(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = sum_to(div(gy, ps[1]), ps[0].shape());
        if (need[1])
          g[1] = neg(
              sum_to(div(mul(gy, ps[0]), square(ps[1])), ps[1].shape()));
        return g;
      });
}

// a/b with 0 where b == 0; backs the norm gradient at zero
template <typename T>
Var<T> zero_guarded_div(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "zgdiv", zero_guarded_div(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = sum_to(zero_guarded_div(gy, ps[1]), ps[0].shape());
        if (need[1])
          g[1] = neg(sum_to(zero_guarded_div(mul(gy, ps[0]), square(ps[1])),
                            ps[1].shape()));
        return g;
      });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return detail::make_op<T>(
      "neg", neg(a.value()), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>&,
         const std::vector<char>&) {
        return std::vector<Var<T>>{neg(gy)};
      });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return detail::make_op<T>(
      "add_scalar", add_scalar(a.value(), s), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>&,
         const std::vector<char>&) { return std::vector<Var<T>>{gy}; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::make_op<T>(
      "scale", scale(a.value(), s), {a},
      [s](const Var<T>& gy, const std::vector<Var<T>>&,
          const std::vector<char>&) {
        return std::vector<Var<T>>{scale(gy, s)};
      });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return detail::make_op<T>(
      "tanh", tanh(a.value()), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>&) {
        Var<T> t = tanh(ps[0]);
        Var<T> one = Var<T>::constant(Tensor<T>(ps[0].shape(), T(1)));
        return std::vector<Var<T>>{mul(gy, sub(one, square(t)))};
      });
}

// subgradient at 0 is the negative-side slope: 0 for relu, `slope` for leaky
template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::make_op<T>(
      "relu", relu(a.value()), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>&) {
        Tensor<T> mask(ps[0].shape());
        const Tensor<T>& x = ps[0].value();
        for (int64_t i = 0; i < x.numel(); ++i)
          mask[i] = x[i] > T(0) ? T(1) : T(0);
        return std::vector<Var<T>>{mul(gy, Var<T>::constant(std::move(mask)))};
      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return detail::make_op<T>(
      "leaky_relu", leaky_relu(a.value(), slope), {a},
      [slope](const Var<T>& gy, const std::vector<Var<T>>& ps,
              const std::vector<char>&) {
        Tensor<T> mask(ps[0].shape());
        const Tensor<T>& x = ps[0].value();
        for (int64_t i = 0; i < x.numel(); ++i)
          mask[i] = x[i] > T(0) ? T(1) : slope;
        return std::vector<Var<T>>{mul(gy, Var<T>::constant(std::move(mask)))};
      });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return detail::make_op<T>(
      "sqrt", sqrt(a.value()), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>&) {
        // d sqrt = gy / (2 sqrt(x)); defined as 0 at x == 0
        return std::vector<Var<T>>{
            zero_guarded_div(gy, scale(sqrt(ps[0]), T(2)))};
      });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return detail::make_op<T>(
      "square", square(a.value()), {a},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>&) {
        return std::vector<Var<T>>{mul(gy, scale(ps[0], T(2)))};
      });
}

template <typename T>
Var<T> transpose(const Var<T>& a, const std::vector<int64_t>& perm) {
  return detail::make_op<T>(
      "transpose", transpose(a.value(), perm), {a},
      [perm](const Var<T>& gy, const std::vector<Var<T>>&,
             const std::vector<char>&) {
        std::vector<int64_t> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int64_t(i);
        return std::vector<Var<T>>{transpose(gy, inv)};
      });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return detail::make_op<T>(
      "matmul", matmul(a.value(), b.value()), {a, b},
      [](const Var<T>& gy, const std::vector<Var<T>>& ps,
         const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = matmul(gy, transpose(ps[1], {1, 0}));
        if (need[1]) g[1] = matmul(transpose(ps[0], {1, 0}), gy);
        return g;
      });
}

template <typename T>
Var<T> reshape(const Var<T>& a, const Shape& shape) {
  Shape in = a.shape();
  return detail::make_op<T>(
      "reshape", reshape(a.value(), shape), {a},
      [in](const Var<T>& gy, const std::vector<Var<T>>&,
           const std::vector<char>&) {
        return std::vector<Var<T>>{reshape(gy, in)};
      });
}

template <typename T>
Var<T> slice(const Var<T>& a, const std::vector<int64_t>& offsets,
             const Shape& extents) {
  Shape in = a.shape();
  return detail::make_op<T>(
      "slice", slice(a.value(), offsets, extents), {a},
      [in, offsets, extents](const Var<T>& gy, const std::vector<Var<T>>&,
                             const std::vector<char>&) {
        std::vector<int64_t> after(in.size());
        for (size_t i = 0; i < in.size(); ++i)
          after[i] = in[i] - offsets[i] - extents[i];
        return std::vector<Var<T>>{pad(gy, offsets, after)};
      });
}

template <typename T>
Var<T> pad(const Var<T>& a, const std::vector<int64_t>& before,
           const std::vector<int64_t>& after, T value = T(0)) {
  Shape in = a.shape();
  return detail::make_op<T>(
      "pad", pad(a.value(), before, after, value), {a},
      [in, before](const Var<T>& gy, const std::vector<Var<T>>&,
                   const std::vector<char>&) {
        return std::vector<Var<T>>{slice(gy, before, in)};
      });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& shape) {
  Shape in = a.shape();
  return detail::make_op<T>(
      "broadcast_to", broadcast_to(a.value(), shape), {a},
      [in](const Var<T>& gy, const std::vector<Var<T>>&,
           const std::vector<char>&) {
        return std::vector<Var<T>>{sum_to(gy, in)};
      });
}

template <typename T>
Var<T> reduce_sum(const Var<T>& a, const std::vector<int64_t>& axes,
                  bool keepdims) {
  Shape in = a.shape();
  return detail::make_op<T>(
      "reduce_sum", reduce_sum(a.value(), axes, keepdims), {a},
      [in, axes](const Var<T>& gy, const std::vector<Var<T>>&,
                 const std::vector<char>&) {
        Shape kept = in;
        for (int64_t ax : axes) kept[size_t(ax)] = 1;
        return std::vector<Var<T>>{broadcast_to(reshape(gy, kept), in)};
      });
}

template <typename T>
Var<T> reduce_mean(const Var<T>& a, const std::vector<int64_t>& axes,
                   bool keepdims = false) {
  int64_t count = 1;
  for (int64_t ax : axes) count *= a.shape()[size_t(ax)];
  return scale(reduce_sum(a, axes, keepdims), T(1) / T(count));
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  return sum_to(a, Shape{1});
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / T(a.value().numel()));
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec) {
  return detail::make_op<T>(
      "conv3d", conv3d(x.value(), w.value(), spec), {x, w},
      [spec](const Var<T>& gy, const std::vector<Var<T>>& ps,
             const std::vector<char>& need) {
        std::vector<Var<T>> g(2);
        if (need[0]) g[0] = conv3d_transposed(gy, ps[1], spec);
        if (need[1]) g[1] = conv3d_wgrad(ps[0], gy, spec);
        return g;
      });
}

template <typename T>
Var<T> conv3d_transposed(const Var<T>& g, const Var<T>& w,
                         const ConvSpec& spec) {
  return detail::make_op<T>(
      "conv3d_transposed", conv3d_transposed(g.value(), w.value(), spec),
      {g, w},
      [spec](const Var<T>& gz, const std::vector<Var<T>>& ps,
             const std::vector<char>& need) {
        std::vector<Var<T>> out(2);
        if (need[0]) out[0] = conv3d(gz, ps[1], spec);
        if (need[1]) out[1] = conv3d_wgrad(gz, ps[0], spec);
        return out;
      });
}

template <typename T>
Var<T> conv3d_wgrad(const Var<T>& x, const Var<T>& gy, const ConvSpec& spec) {
  return detail::make_op<T>(
      "conv3d_wgrad", conv3d_wgrad(x.value(), gy.value(), spec), {x, gy},
      [spec](const Var<T>& gw, const std::vector<Var<T>>& ps,
             const std::vector<char>& need) {
        std::vector<Var<T>> out(2);
        if (need[0]) out[0] = conv3d_transposed(ps[1], gw, spec);
        if (need[1]) out[1] = conv3d(ps[0], gw, spec);
        return out;
      });
}

// ---------------------------------------------------------------------------
// reverse-mode differentiation
// ---------------------------------------------------------------------------

template <typename T>
struct GradResult {
  std::vector<Var<T>> grads;       // shape-matched to each wrt
  std::vector<bool> unreachable;   // true: wrt not reachable, grad is zero
};

// d output / d wrt_i for a scalar output. With create_graph the returned
// Vars stay connected to the graph and are differentiable again.
template <typename T>
GradResult<T> grad(const Var<T>& output, const std::vector<Var<T>>& wrt,
                   bool create_graph = false) {
  if (output.value().numel() != 1)
    throw std::invalid_argument("grad: output must be scalar, got shape " +
                                shape_str(output.shape()));

  // reachable subgraph, in discovery order
  std::vector<Node<T>*> nodes;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{output.node()};
  seen.insert(output.node());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (seen.insert(p.node()).second) stack.push_back(p.node());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](Node<T>* a, Node<T>* b) { return a->seq < b->seq; });

  // which nodes lead to a wrt leaf
  std::unordered_set<Node<T>*> wrt_set;
  for (const auto& v : wrt) wrt_set.insert(v.node());
  std::unordered_map<Node<T>*, char> need;
  for (Node<T>* n : nodes) {
    char nd = wrt_set.count(n) && n->requires_grad ? 1 : 0;
    if (!nd && n->requires_grad) {
      for (const auto& p : n->parents) {
        auto it = need.find(p.node());
        if (it != need.end() && it->second) { nd = 1; break; }
      }
    }
    need[n] = nd;
  }

  std::unordered_map<Node<T>*, Var<T>> adj;
  adj[output.node()] =
      Var<T>::constant(Tensor<T>(output.shape(), T(1)));

  for (size_t i = nodes.size(); i-- > 0;) {
    Node<T>* n = nodes[i];
    auto it = adj.find(n);
    if (it == adj.end() || !need[n] || !n->backward) continue;
    std::vector<char> pneed(n->parents.size(), 0);
    for (size_t j = 0; j < n->parents.size(); ++j) {
      Node<T>* p = n->parents[j].node();
      pneed[j] = p->requires_grad && need[p] ? 1 : 0;
    }
    std::vector<Var<T>> pgrads = n->backward(it->second, n->parents, pneed);
    for (size_t j = 0; j < n->parents.size(); ++j) {
      if (!pneed[j] || !pgrads[j].defined()) continue;
      Node<T>* p = n->parents[j].node();
      auto pa = adj.find(p);
      if (pa == adj.end())
        adj.emplace(p, pgrads[j]);
      else
        pa->second = add(pa->second, pgrads[j]);
    }
  }

  GradResult<T> res;
  res.grads.reserve(wrt.size());
  res.unreachable.assign(wrt.size(), false);
  for (size_t i = 0; i < wrt.size(); ++i) {
    auto it = adj.find(wrt[i].node());
    if (it == adj.end() || !wrt[i].requires_grad()) {
      res.unreachable[i] = true;
      res.grads.push_back(
          Var<T>::constant(Tensor<T>(wrt[i].shape(), T(0))));
    } else {
      res.grads.push_back(create_graph ? it->second : it->second.detach());
    }
  }
  return res;
}

}  // namespace ivgan
