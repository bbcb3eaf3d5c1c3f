#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every operation records a backward rule written in terms of other
// operations, so gradients can themselves be differentiated (needed for the
// gradient-penalty term). Values are column-major matrices; image batches use
// the layout [channels, batch * height * width] with one column per pixel.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace moodgan::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Flat (column-major) source positions; -1 reads as zero.
using IndexMap = std::shared_ptr<const std::vector<std::int32_t>>;

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
 public:
  explicit NoGradGuard(bool enable = false) : previous_(detail::grad_mode()) {
    detail::grad_mode() = enable;
  }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename Scalar>
class Var;

template <typename Scalar>
struct Node {
  Mat<Scalar> value;
  bool requires_grad = false;
  std::vector<Var<Scalar>> inputs;
  // Maps the gradient of this node to gradients of `inputs` (same order);
  // entries for inputs that do not require gradients may be left undefined.
  std::function<std::vector<Var<Scalar>>(const Var<Scalar>&)> backward;
};

template <typename Scalar>
class Var {
 public:
  using Matrix = Mat<Scalar>;

  Var() = default;
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  static Var constant(Matrix value) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    return Var(std::move(node));
  }

  /// A leaf that gradients can be taken with respect to.
  static Var leaf(Matrix value) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Var(std::move(node));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Scalar item() const { return node_->value(0, 0); }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

namespace detail {

template <typename Scalar, typename Backward>
Var<Scalar> make_op(Mat<Scalar> value, std::vector<Var<Scalar>> inputs,
                    Backward&& backward) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::forward<Backward>(backward);
  }
  return Var<Scalar>(std::move(node));
}

// Recovers a Var for a node from inside its own backward rule without forming
// an ownership cycle.
template <typename Scalar>
Var<Scalar> lock(const std::weak_ptr<Node<Scalar>>& weak) {
  auto strong = weak.lock();
  if (!strong) throw std::logic_error("autograd: node expired during backward");
  return Var<Scalar>(std::move(strong));
}

// Inputs whose gradients the running backward pass actually needs; unset
// outside of grad().
inline const std::vector<char>*& wanted_inputs() {
  thread_local const std::vector<char>* mask = nullptr;
  return mask;
}

template <typename Scalar>
bool wants(std::size_t i, const Var<Scalar>& input) {
  const auto* mask = wanted_inputs();
  return input.requires_grad() && (mask == nullptr || (*mask)[i]);
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and algebraic operations.

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return detail::make_op<Scalar>(a.value() + b.value(), {a, b},
                                 [](const Var<Scalar>& g) { return std::vector{g, g}; });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  return detail::make_op<Scalar>(a.value() * s, {a},
                                 [s](const Var<Scalar>& g) { return std::vector{g * s}; });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  return a * s;
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return a * Scalar(-1);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return detail::make_op<Scalar>(a.value() - b.value(), {a, b},
                                 [](const Var<Scalar>& g) { return std::vector{g, -g}; });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  return detail::make_op<Scalar>((a.value().array() + s).matrix(), {a},
                                 [](const Var<Scalar>& g) { return std::vector{g}; });
}

/// Hadamard product.
template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                  "cwise_product: shape mismatch");
  return detail::make_op<Scalar>(
      a.value().cwiseProduct(b.value()), {a, b},
      [a, b](const Var<Scalar>& g) {
        Var<Scalar> ga, gb;
        if (detail::wants(0, a)) ga = cwise_product(g, b);
        if (detail::wants(1, b)) gb = cwise_product(g, a);
        return std::vector{ga, gb};
      });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  return detail::make_op<Scalar>(a.value().transpose(), {a},
                                 [](const Var<Scalar>& g) { return std::vector{transpose(g)}; });
}

/// op(a) * op(b), where op transposes when the matching flag is set.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b, bool trans_a, bool trans_b) {
  const Eigen::Index inner_a = trans_a ? a.rows() : a.cols();
  const Eigen::Index inner_b = trans_b ? b.cols() : b.rows();
  detail::require(inner_a == inner_b, "matmul: inner dimension mismatch");
  Mat<Scalar> out(trans_a ? a.cols() : a.rows(), trans_b ? b.rows() : b.cols());
  if (!trans_a && !trans_b) {
    out.noalias() = a.value() * b.value();
  } else if (trans_a && !trans_b) {
    out.noalias() = a.value().transpose() * b.value();
  } else if (!trans_a && trans_b) {
    out.noalias() = a.value() * b.value().transpose();
  } else {
    out.noalias() = a.value().transpose() * b.value().transpose();
  }
  return detail::make_op<Scalar>(std::move(out), {a, b}, [a, b, trans_a, trans_b](const Var<Scalar>& g) {
    Var<Scalar> ga, gb;
    if (detail::wants(0, a)) ga = trans_a ? matmul(b, g, trans_b, true) : matmul(g, b, false, !trans_b);
    if (detail::wants(1, b)) gb = trans_b ? matmul(g, a, true, trans_a) : matmul(a, g, !trans_a, false);
    return std::vector{ga, gb};
  });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  return matmul(a, b, false, false);
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  return detail::make_op<Scalar>(a.value().array().square().matrix(), {a},
                                 [a](const Var<Scalar>& g) {
                                   return std::vector{cwise_product(g, a) * Scalar(2)};
                                 });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  auto node = detail::make_op<Scalar>(a.value().array().tanh().matrix(), {a},
                                      [](const Var<Scalar>&) { return std::vector<Var<Scalar>>{}; });
  if (node.requires_grad()) {
    std::weak_ptr<Node<Scalar>> self = node.node();
    node.node()->backward = [self](const Var<Scalar>& g) {
      auto y = detail::lock(self);
      // d tanh = 1 - y^2
      return std::vector{g - cwise_product(g, square(y))};
    };
  }
  return node;
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  auto node = detail::make_op<Scalar>(a.value().array().exp().matrix(), {a},
                                      [](const Var<Scalar>&) { return std::vector<Var<Scalar>>{}; });
  if (node.requires_grad()) {
    std::weak_ptr<Node<Scalar>> self = node.node();
    node.node()->backward = [self](const Var<Scalar>& g) {
      return std::vector{cwise_product(g, detail::lock(self))};
    };
  }
  return node;
}

/// Elementwise 1/a.
template <typename Scalar>
Var<Scalar> reciprocal(const Var<Scalar>& a) {
  auto node = detail::make_op<Scalar>(a.value().array().inverse().matrix(), {a},
                                      [](const Var<Scalar>&) { return std::vector<Var<Scalar>>{}; });
  if (node.requires_grad()) {
    std::weak_ptr<Node<Scalar>> self = node.node();
    node.node()->backward = [self](const Var<Scalar>& g) {
      return std::vector{-cwise_product(g, square(detail::lock(self)))};
    };
  }
  return node;
}

template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& a) {
  auto node = detail::make_op<Scalar>(a.value().array().sqrt().matrix(), {a},
                                      [](const Var<Scalar>&) { return std::vector<Var<Scalar>>{}; });
  if (node.requires_grad()) {
    std::weak_ptr<Node<Scalar>> self = node.node();
    node.node()->backward = [self](const Var<Scalar>& g) {
      return std::vector{cwise_product(g, reciprocal(detail::lock(self))) * Scalar(0.5)};
    };
  }
  return node;
}

/// Elementwise |a|; the subgradient at zero is zero.
template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a) {
  return detail::make_op<Scalar>(a.value().cwiseAbs(), {a}, [a](const Var<Scalar>& g) {
    auto sign = Var<Scalar>::constant(a.value().unaryExpr([](Scalar v) {
      return v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0));
    }));
    return std::vector{cwise_product(g, sign)};
  });
}

/// max(a, slope * a); slope 0 gives ReLU.
template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope) {
  Mat<Scalar> out = a.value().cwiseMax(Scalar(0)) + slope * a.value().cwiseMin(Scalar(0));
  return detail::make_op<Scalar>(std::move(out), {a}, [a, slope](const Var<Scalar>& g) {
    Mat<Scalar> mask =
        ((a.value().array() > Scalar(0)).template cast<Scalar>() * (Scalar(1) - slope) + slope).matrix();
    return std::vector{cwise_product(g, Var<Scalar>::constant(std::move(mask)))};
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  return leaky_relu(a, Scalar(0));
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts.

template <typename Scalar>
Var<Scalar> broadcast_cols(const Var<Scalar>& a, Eigen::Index cols);
template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& a, Eigen::Index rows);

/// [R, C] -> [R, 1]
template <typename Scalar>
Var<Scalar> row_sum(const Var<Scalar>& a) {
  const Eigen::Index cols = a.cols();
  return detail::make_op<Scalar>(a.value().rowwise().sum(), {a}, [cols](const Var<Scalar>& g) {
    return std::vector{broadcast_cols(g, cols)};
  });
}

/// [R, C] -> [1, C]
template <typename Scalar>
Var<Scalar> col_sum(const Var<Scalar>& a) {
  const Eigen::Index rows = a.rows();
  return detail::make_op<Scalar>(a.value().colwise().sum(), {a}, [rows](const Var<Scalar>& g) {
    return std::vector{broadcast_rows(g, rows)};
  });
}

/// [R, 1] -> [R, C]
template <typename Scalar>
Var<Scalar> broadcast_cols(const Var<Scalar>& a, Eigen::Index cols) {
  detail::require(a.cols() == 1, "broadcast_cols: expected a column");
  return detail::make_op<Scalar>(a.value().replicate(1, cols), {a},
                                 [](const Var<Scalar>& g) { return std::vector{row_sum(g)}; });
}

/// [1, C] -> [R, C]
template <typename Scalar>
Var<Scalar> broadcast_rows(const Var<Scalar>& a, Eigen::Index rows) {
  detail::require(a.rows() == 1, "broadcast_rows: expected a row");
  return detail::make_op<Scalar>(a.value().replicate(rows, 1), {a},
                                 [](const Var<Scalar>& g) { return std::vector{col_sum(g)}; });
}

/// Adds a [R, 1] bias to every column.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  detail::require(bias.cols() == 1 && bias.rows() == a.rows(), "add_bias: shape mismatch");
  Mat<Scalar> out = a.value();
  out.colwise() += bias.value().col(0);
  return detail::make_op<Scalar>(std::move(out), {a, bias}, [](const Var<Scalar>& g) {
    return std::vector{g, row_sum(g)};
  });
}

/// Sum of all entries as a 1x1 matrix.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Mat<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::make_op<Scalar>(std::move(out), {a}, [rows, cols](const Var<Scalar>& g) {
    return std::vector{broadcast_rows(broadcast_cols(g, cols), rows)};
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return sum(a) * (Scalar(1) / Scalar(a.size()));
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Eigen::Index rows, Eigen::Index cols) {
  detail::require(rows * cols == a.size(), "reshape: size mismatch");
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  Mat<Scalar> out = Eigen::Map<const Mat<Scalar>>(a.value().data(), rows, cols);
  return detail::make_op<Scalar>(std::move(out), {a}, [r0, c0](const Var<Scalar>& g) {
    return std::vector{reshape(g, r0, c0)};
  });
}

// ---------------------------------------------------------------------------
// Index-driven linear maps. gather and scatter_add are adjoint to each other,
// so both stay differentiable to any order.

template <typename Scalar>
Var<Scalar> scatter_add(const Var<Scalar>& a, const IndexMap& index, Eigen::Index rows,
                        Eigen::Index cols);

/// out.flat[i] = index[i] < 0 ? 0 : a.flat[index[i]]
template <typename Scalar>
Var<Scalar> gather(const Var<Scalar>& a, const IndexMap& index, Eigen::Index rows,
                   Eigen::Index cols) {
  detail::require(static_cast<Eigen::Index>(index->size()) == rows * cols,
                  "gather: index size mismatch");
  Mat<Scalar> out(rows, cols);
  const Scalar* src = a.value().data();
  Scalar* dst = out.data();
  const std::int32_t* idx = index->data();
  const Eigen::Index n = rows * cols;
  for (Eigen::Index i = 0; i < n; ++i) dst[i] = idx[i] < 0 ? Scalar(0) : src[idx[i]];
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return detail::make_op<Scalar>(std::move(out), {a}, [index, r0, c0](const Var<Scalar>& g) {
    return std::vector{scatter_add(g, index, r0, c0)};
  });
}

/// out.flat[index[i]] += a.flat[i]; the adjoint of gather.
template <typename Scalar>
Var<Scalar> scatter_add(const Var<Scalar>& a, const IndexMap& index, Eigen::Index rows,
                        Eigen::Index cols) {
  detail::require(static_cast<Eigen::Index>(index->size()) == a.size(),
                  "scatter_add: index size mismatch");
  Mat<Scalar> out = Mat<Scalar>::Zero(rows, cols);
  const Scalar* src = a.value().data();
  Scalar* dst = out.data();
  const std::int32_t* idx = index->data();
  const Eigen::Index n = a.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (idx[i] >= 0) dst[idx[i]] += src[i];
  }
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return detail::make_op<Scalar>(std::move(out), {a}, [index, r0, c0](const Var<Scalar>& g) {
    return std::vector{gather(g, index, r0, c0)};
  });
}

template <typename Scalar>
Var<Scalar> pad_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index total);

/// Rows [start, start + count).
template <typename Scalar>
Var<Scalar> block_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && start + count <= a.rows(), "block_rows: out of range");
  const Eigen::Index total = a.rows();
  return detail::make_op<Scalar>(a.value().middleRows(start, count), {a},
                                 [start, total](const Var<Scalar>& g) {
                                   return std::vector{pad_rows(g, start, total)};
                                 });
}

/// Embeds `a` at row `start` of a zero matrix with `total` rows.
template <typename Scalar>
Var<Scalar> pad_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index total) {
  detail::require(start >= 0 && start + a.rows() <= total, "pad_rows: out of range");
  Mat<Scalar> out = Mat<Scalar>::Zero(total, a.cols());
  out.middleRows(start, a.rows()) = a.value();
  const Eigen::Index count = a.rows();
  return detail::make_op<Scalar>(std::move(out), {a}, [start, count](const Var<Scalar>& g) {
    return std::vector{block_rows(g, start, count)};
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.cols() == b.cols(), "concat_rows: column mismatch");
  Mat<Scalar> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  const Eigen::Index ra = a.rows(), rb = b.rows();
  return detail::make_op<Scalar>(std::move(out), {a, b}, [ra, rb](const Var<Scalar>& g) {
    return std::vector{block_rows(g, 0, ra), block_rows(g, ra, rb)};
  });
}

/// Column-wise log-softmax (classes along rows).
template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& a) {
  Mat<Scalar> out = a.value();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const Scalar m = out.col(c).maxCoeff();
    const Scalar lse = m + std::log((out.col(c).array() - m).exp().sum());
    out.col(c).array() -= lse;
  }
  auto node = detail::make_op<Scalar>(std::move(out), {a},
                                      [](const Var<Scalar>&) { return std::vector<Var<Scalar>>{}; });
  if (node.requires_grad()) {
    std::weak_ptr<Node<Scalar>> self = node.node();
    node.node()->backward = [self](const Var<Scalar>& g) {
      auto y = detail::lock(self);
      auto softmax = exp(y);
      return std::vector{g - cwise_product(softmax, broadcast_rows(col_sum(g), g.rows()))};
    };
  }
  return node;
}

// ---------------------------------------------------------------------------
// Gradient computation.

/// Gradients of a scalar `output` with respect to `inputs`. With
/// `create_graph` the returned gradients are themselves differentiable.
template <typename Scalar>
std::vector<Var<Scalar>> grad(const Var<Scalar>& output, const std::vector<Var<Scalar>>& inputs,
                              bool create_graph = false) {
  detail::require(output.rows() == 1 && output.cols() == 1, "grad: output must be a scalar");
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  std::unordered_set<Node<Scalar>*> targets;
  for (const auto& in : inputs) targets.insert(in.node().get());

  // Post-order walk; a node is relevant when some requested input is
  // reachable from it, and only relevant nodes are differentiated.
  std::vector<NodePtr> order;
  std::unordered_map<Node<Scalar>*, bool> relevant;
  if (output.requires_grad()) {
    std::vector<std::pair<NodePtr, std::size_t>> stack{{output.node(), 0}};
    relevant.emplace(output.node().get(), false);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const auto& child = node->inputs[next++].node();
        if (child->requires_grad && relevant.emplace(child.get(), false).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        bool reaches = targets.count(node.get()) > 0;
        for (const auto& in : node->inputs) {
          if (!in.requires_grad()) continue;
          reaches = reaches || relevant[in.node().get()];
        }
        relevant[node.get()] = reaches;
        if (reaches) order.push_back(node);
        stack.pop_back();
      }
    }
  }

  NoGradGuard mode(create_graph);
  std::unordered_map<Node<Scalar>*, Var<Scalar>> grads;
  if (output.requires_grad()) {
    grads[output.node().get()] = Var<Scalar>::constant(Mat<Scalar>::Ones(1, 1));
  }
  std::vector<char> mask;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodePtr& node = *it;
    auto found = grads.find(node.get());
    if (found == grads.end() || !node->backward) continue;
    mask.assign(node->inputs.size(), 0);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const auto& in = node->inputs[i];
      mask[i] = in.requires_grad() && relevant[in.node().get()];
    }
    std::vector<Var<Scalar>> upstream;
    {
      struct MaskScope {
        explicit MaskScope(const std::vector<char>* m) : previous(detail::wanted_inputs()) {
          detail::wanted_inputs() = m;
        }
        ~MaskScope() { detail::wanted_inputs() = previous; }
        const std::vector<char>* previous;
      } scope(&mask);
      upstream = node->backward(found->second);
    }
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      if (!mask[i]) continue;
      const auto& in = node->inputs[i];
      auto slot = grads.find(in.node().get());
      if (slot == grads.end()) {
        grads.emplace(in.node().get(), upstream[i]);
      } else {
        slot->second = slot->second + upstream[i];
      }
    }
  }

  std::vector<Var<Scalar>> result;
  result.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto found = grads.find(in.node().get());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else {
      result.push_back(Var<Scalar>::constant(Mat<Scalar>::Zero(in.rows(), in.cols())));
    }
  }
  return result;
}

}  // namespace moodgan::nn
