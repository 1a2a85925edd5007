#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tape records every operation whose inputs require gradients, in creation
// order, so the record is topologically sorted by construction. Tensors are
// shared handles; parameters live outside any tape and persist across epochs
// while a fresh tape is built for each forward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "linkbench/rng.hpp"
#include "linkbench/sparse.hpp"

namespace linkbench::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::uint64_t id = 0;      // 0 for tensors not recorded on a tape
  BackwardFn backward;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double v) { return constant({}, {v}); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> value() const { return node_->value; }
  std::vector<double>& mutable_value() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient, or zeros if none has been accumulated.
  std::vector<double> grad() const;
  std::vector<double>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t id() const { return node_->id; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Computation record. Single-threaded; one per forward/backward pass.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<NodePtr>& nodes() const noexcept { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Creates an op result. It is recorded, with `backward`, only when
  /// gradients are enabled and at least one input requires them.
  Tensor emit(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              BackwardFn backward);
  Tensor emit(Shape shape, std::vector<double> value, bool inputs_require_grad, BackwardFn backward);

  /// Propagates d(root)/d(.) to every reachable tensor that requires grad.
  /// Intermediate gradients are reset first; leaf gradients accumulate.
  void backward(const Tensor& root);

 private:
  bool grad_enabled_;
  std::uint64_t next_id_ = 1;
  std::vector<NodePtr> nodes_;
};

using SparseRef = std::shared_ptr<const SparseMatrix>;

// Linear algebra.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor spmm(Tape& tape, SparseRef s, const Tensor& d);
Tensor spmm(Tape& tape, const SparseMatrix& s, const Tensor& d);
/// out[dst[e]] += weights[e] * values[src[e]]; differentiable in weights and values.
Tensor edge_aggregate(Tape& tape, const Tensor& weights, const Tensor& values, std::span<const std::size_t> src,
                      std::span<const std::size_t> dst, std::size_t num_out);

// Pointwise unary.
Tensor relu(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor elu(Tape& tape, const Tensor& x, double alpha = 1.0);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
/// Throws DomainError on non-positive input.
Tensor log(Tape& tape, const Tensor& x);
Tensor neg(Tape& tape, const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double c);

// Pointwise binary. Shapes must match unless one side holds a single element.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

// Reductions and reshaping.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor sum_rows(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> idx);

// Graph-specific.
/// Softmax within runs of equal, non-decreasing segment ids.
Tensor segment_softmax(Tape& tape, const Tensor& scores, std::span<const std::size_t> segment_ids);
inline constexpr double kNormEpsilon = 1e-12;
Tensor rows_l2_normalize(Tape& tape, const Tensor& x);
/// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng& rng);

/// Inverted dropout on a constant sparse matrix (values only).
SparseMatrix dropout(const SparseMatrix& s, double rate, Rng& rng);

}  // namespace linkbench::ad
