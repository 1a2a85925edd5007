#include "linkbench/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "linkbench/error.hpp"

namespace linkbench::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
}

bool wants_grad(const NodePtr& n) { return n && n->requires_grad; }

// Pointwise unary op given value fn f(x) and derivative df(x, y).
template <typename Fwd, typename Deriv>
Tensor pointwise(Tape& tape, const Tensor& x, Fwd f, Deriv df) {
  std::vector<double> out(x.size());
  const auto xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  NodePtr xn = x.node();
  Tensor y = tape.emit(x.shape(), std::move(out), {&x}, nullptr);
  if (y.node()->requires_grad) {
    std::weak_ptr<Node> yw = y.node();
    y.node()->backward = [xn, yw, df](std::span<const double> g) {
      auto yn = yw.lock();
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->value[i], yn->value[i]);
    };
  }
  return y;
}

enum class BinOp { add, sub, mul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.size() == 1 && !same;
  const bool b_scalar = b.size() == 1 && !same;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const Shape out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(out_shape);
  const auto av = a.value();
  const auto bv = b.value();
  auto A = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto B = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case BinOp::add: out[i] = A(i) + B(i); break;
      case BinOp::sub: out[i] = A(i) - B(i); break;
      case BinOp::mul: out[i] = A(i) * B(i); break;
    }
  }
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return tape.emit(out_shape, std::move(out), {&a, &b}, [an, bn, a_scalar, b_scalar, op](std::span<const double> g) {
    auto ai = [&](std::size_t i) { return a_scalar ? std::size_t{0} : i; };
    auto bi = [&](std::size_t i) { return b_scalar ? std::size_t{0} : i; };
    if (wants_grad(an)) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = op == BinOp::mul ? bn->value[bi(i)] : 1.0;
        ga[ai(i)] += g[i] * d;
      }
    }
    if (wants_grad(bn)) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = op == BinOp::mul ? an->value[ai(i)] : (op == BinOp::sub ? -1.0 : 1.0);
        gb[bi(i)] += g[i] * d;
      }
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                     " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

std::size_t Tensor::rows() const { return rank() == 0 ? 1 : shape()[0]; }

std::size_t Tensor::cols() const {
  if (rank() < 2) return 1;
  return shape()[1];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("tensor: item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tape::emit(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                  BackwardFn backward) {
  bool any = false;
  for (const Tensor* t : inputs) any = any || (t->defined() && t->requires_grad());
  return emit(std::move(shape), std::move(value), any, std::move(backward));
}

Tensor Tape::emit(Shape shape, std::vector<double> value, bool inputs_require_grad, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled_ && inputs_require_grad) {
    n->requires_grad = true;
    n->id = next_id_++;
    n->backward = std::move(backward);
    nodes_.push_back(n);
  }
  return Tensor(std::move(n));
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) throw ContractError("backward: root must be scalar, got " + shape_string(root.shape()));
  if (!root.requires_grad()) return;
  for (auto& n : nodes_) n->grad.clear();
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n.grad);
  }
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.value().data(), m, k) * ConstMap(b.value().data(), k, n);
  NodePtr an = a.node(), bn = b.node();
  return tape.emit({m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](std::span<const double> g) {
    ConstMap G(g.data(), m, n);
    if (wants_grad(an)) MutMap(an->grad_buffer().data(), m, k).noalias() += G * ConstMap(bn->value.data(), k, n).transpose();
    if (wants_grad(bn)) MutMap(bn->grad_buffer().data(), k, n).noalias() += ConstMap(an->value.data(), m, k).transpose() * G;
  });
}

Tensor spmm(Tape& tape, SparseRef s, const Tensor& d) {
  require_rank2(d, "spmm");
  if (s->cols() != d.rows()) {
    throw ShapeError("spmm: sparse " + std::to_string(s->rows()) + "x" + std::to_string(s->cols()) +
                     " cannot multiply dense " + shape_string(d.shape()));
  }
  const std::size_t m = s->rows(), n = d.cols();
  std::vector<double> out(m * n, 0.0);
  const auto& off = s->row_offsets();
  const auto& idx = s->col_indices();
  const auto& val = s->values();
  const double* dv = d.value().data();
  for (std::size_t r = 0; r < m; ++r) {
    double* o = out.data() + r * n;
    for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
      const double v = val[p];
      const double* src = dv + idx[p] * n;
      for (std::size_t c = 0; c < n; ++c) o[c] += v * src[c];
    }
  }
  NodePtr dn = d.node();
  return tape.emit({m, n}, std::move(out), {&d}, [s, dn, m, n](std::span<const double> g) {
    auto& gd = dn->grad_buffer();
    const auto& off = s->row_offsets();
    const auto& idx = s->col_indices();
    const auto& val = s->values();
    for (std::size_t r = 0; r < m; ++r) {
      const double* gr = g.data() + r * n;
      for (std::size_t p = off[r]; p < off[r + 1]; ++p) {
        double* dst = gd.data() + idx[p] * n;
        const double v = val[p];
        for (std::size_t c = 0; c < n; ++c) dst[c] += v * gr[c];
      }
    }
  });
}

Tensor spmm(Tape& tape, const SparseMatrix& s, const Tensor& d) {
  return spmm(tape, std::make_shared<const SparseMatrix>(s), d);
}

Tensor edge_aggregate(Tape& tape, const Tensor& weights, const Tensor& values, std::span<const std::size_t> src,
                      std::span<const std::size_t> dst, std::size_t num_out) {
  require_rank2(values, "edge_aggregate");
  const std::size_t e = src.size();
  if (dst.size() != e || weights.size() != e) throw ShapeError("edge_aggregate: weights/src/dst lengths differ");
  const std::size_t n = values.rows(), f = values.cols();
  for (std::size_t i = 0; i < e; ++i) {
    if (src[i] >= n || dst[i] >= num_out) throw IndexError("edge_aggregate: edge endpoint out of range");
  }
  std::vector<double> out(num_out * f, 0.0);
  const auto wv = weights.value();
  const auto vv = values.value();
  for (std::size_t i = 0; i < e; ++i) {
    const double w = wv[i];
    const double* row = vv.data() + src[i] * f;
    double* o = out.data() + dst[i] * f;
    for (std::size_t c = 0; c < f; ++c) o[c] += w * row[c];
  }
  NodePtr wn = weights.node(), vn = values.node();
  std::vector<std::size_t> s(src.begin(), src.end()), d(dst.begin(), dst.end());
  return tape.emit({num_out, f}, std::move(out), {&weights, &values},
                   [wn, vn, s = std::move(s), d = std::move(d), f](std::span<const double> g) {
                     const bool gw = wants_grad(wn), gv = wants_grad(vn);
                     double* wgrad = gw ? wn->grad_buffer().data() : nullptr;
                     double* vgrad = gv ? vn->grad_buffer().data() : nullptr;
                     for (std::size_t i = 0; i < s.size(); ++i) {
                       const double* gr = g.data() + d[i] * f;
                       if (gw) {
                         const double* row = vn->value.data() + s[i] * f;
                         double acc = 0.0;
                         for (std::size_t c = 0; c < f; ++c) acc += gr[c] * row[c];
                         wgrad[i] += acc;
                       }
                       if (gv) {
                         const double w = wn->value[i];
                         double* vr = vgrad + s[i] * f;
                         for (std::size_t c = 0; c < f; ++c) vr[c] += w * gr[c];
                       }
                     }
                   });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return pointwise(
      tape, x, [](double v) { return v < 0.0 ? 0.0 : v; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  return pointwise(
      tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor elu(Tape& tape, const Tensor& x, double alpha) {
  return pointwise(
      tape, x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return pointwise(
      tape, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return pointwise(
      tape, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.value()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return pointwise(
      tape, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor neg(Tape& tape, const Tensor& x) {
  return pointwise(
      tape, x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor softplus(Tape& tape, const Tensor& x) {
  return pointwise(
      tape, x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return pointwise(
      tape, x, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double c) {
  return pointwise(
      tape, x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinOp::add, "add"); }
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinOp::sub, "sub"); }
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, a, b, BinOp::mul, "mul"); }

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  NodePtr xn = x.node();
  return tape.emit({}, {s}, {&x}, [xn](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(Tape& tape, const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean: empty tensor");
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_rows(Tape& tape, const Tensor& x) {
  require_rank2(x, "sum_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n, 0.0);
  const auto xv = x.value();
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += xv[r * d + c];
    out[r] = s;
  }
  NodePtr xn = x.node();
  return tape.emit({n}, std::move(out), {&x}, [xn, d](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t r = 0; r < g.size(); ++r) {
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[r];
    }
  });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.value().begin(), x.value().end());
  NodePtr xn = x.node();
  return tape.emit(std::move(shape), std::move(out), {&x}, [xn](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  if (begin > end || end > x.rows()) throw IndexError("slice_rows: range out of bounds");
  const std::size_t d = x.cols();
  std::vector<double> out(x.value().begin() + static_cast<std::ptrdiff_t>(begin * d),
                          x.value().begin() + static_cast<std::ptrdiff_t>(end * d));
  NodePtr xn = x.node();
  return tape.emit({end - begin, d}, std::move(out), {&x}, [xn, begin, d](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
  });
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != n) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  std::vector<NodePtr> nodes;
  bool any = false;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    any = any || p.requires_grad();
  }
  return tape.emit({n, total}, std::move(out), any, [nodes, widths, total, n](std::span<const double> g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (wants_grad(nodes[k])) {
        auto& gk = nodes[k]->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gk[r * widths[k] + c] += g[r * total + offset + c];
        }
      }
      offset += widths[k];
    }
  });
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_cols(tape, parts);
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> idx) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(idx.size() * d);
  const auto xv = x.value();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " + std::to_string(n) +
                       " rows");
    }
    std::copy_n(xv.data() + idx[i] * d, d, out.data() + i * d);
  }
  NodePtr xn = x.node();
  std::vector<std::size_t> rows(idx.begin(), idx.end());
  return tape.emit({idx.size(), d}, std::move(out), {&x}, [xn, rows = std::move(rows), d](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) gx[rows[i] * d + c] += g[i * d + c];
    }
  });
}

Tensor segment_softmax(Tape& tape, const Tensor& scores, std::span<const std::size_t> segment_ids) {
  const std::size_t e = scores.size();
  if (segment_ids.size() != e) throw ShapeError("segment_softmax: scores and segment_ids lengths differ");
  for (std::size_t i = 1; i < e; ++i) {
    if (segment_ids[i] < segment_ids[i - 1]) throw ContractError("segment_softmax: segment_ids not sorted");
  }
  // Segment boundaries.
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < e; ++i) {
    if (i == 0 || segment_ids[i] != segment_ids[i - 1]) starts.push_back(i);
  }
  starts.push_back(e);
  std::vector<double> out(e);
  const auto x = scores.value();
  for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
    const std::size_t b = starts[s], end = starts[s + 1];
    double mx = x[b];
    for (std::size_t i = b; i < end; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::size_t i = b; i < end; ++i) z += (out[i] = std::exp(x[i] - mx));
    for (std::size_t i = b; i < end; ++i) out[i] /= z;
  }
  NodePtr xn = scores.node();
  Tensor y = tape.emit(scores.shape(), std::move(out), {&scores}, nullptr);
  if (y.node()->requires_grad) {
    std::weak_ptr<Node> yw = y.node();
    y.node()->backward = [xn, yw, starts = std::move(starts)](std::span<const double> g) {
      auto yn = yw.lock();
      const auto& yv = yn->value;
      auto& gx = xn->grad_buffer();
      for (std::size_t s = 0; s + 1 < starts.size(); ++s) {
        double dot = 0.0;
        for (std::size_t i = starts[s]; i < starts[s + 1]; ++i) dot += g[i] * yv[i];
        for (std::size_t i = starts[s]; i < starts[s + 1]; ++i) gx[i] += yv[i] * (g[i] - dot);
      }
    };
  }
  return y;
}

Tensor rows_l2_normalize(Tape& tape, const Tensor& x) {
  require_rank2(x, "rows_l2_normalize");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  std::vector<double> norms(n);
  const auto xv = x.value();
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += xv[r * d + c] * xv[r * d + c];
    norms[r] = std::sqrt(ss);
    const double denom = std::max(norms[r], kNormEpsilon);
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = xv[r * d + c] / denom;
  }
  NodePtr xn = x.node();
  Tensor y = tape.emit(x.shape(), std::move(out), {&x}, nullptr);
  if (y.node()->requires_grad) {
    std::weak_ptr<Node> yw = y.node();
    y.node()->backward = [xn, yw, norms = std::move(norms), d](std::span<const double> g) {
      auto yn = yw.lock();
      const auto& yv = yn->value;
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < norms.size(); ++r) {
        const double* gr = g.data() + r * d;
        const double* yr = yv.data() + r * d;
        double* out = gx.data() + r * d;
        if (norms[r] > kNormEpsilon) {
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += yr[c] * gr[c];
          for (std::size_t c = 0; c < d; ++c) out[c] += (gr[c] - yr[c] * dot) / norms[r];
        } else {
          for (std::size_t c = 0; c < d; ++c) out[c] += gr[c] / kNormEpsilon;
        }
      }
    };
  }
  return y;
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  const auto xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  NodePtr xn = x.node();
  return tape.emit(x.shape(), std::move(out), {&x}, [xn, mask = std::move(mask)](std::span<const double> g) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

SparseMatrix dropout(const SparseMatrix& s, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0) return s;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> vals(s.values());
  for (auto& v : vals) v = rng.uniform() < rate ? 0.0 : v * keep_scale;
  return s.with_values(std::move(vals));
}

}  // namespace linkbench::ad
