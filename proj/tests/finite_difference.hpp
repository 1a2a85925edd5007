#pragma once

// Central finite-difference oracle. Test-only; independent of the tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "linkbench/autodiff.hpp"
#include "linkbench/rng.hpp"

namespace fdcheck {

using linkbench::ad::Tape;
using linkbench::ad::Tensor;

/// Builds a scalar loss from `params` on the given tape.
using LossFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

inline double eval_loss(const LossFn& f, std::vector<Tensor>& params) {
  Tape tape(false);
  return f(tape, params).item();
}

struct Report {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of every parameter entry against central
/// differences. Relative error uses max(|a|, |n|, floor) as the scale.
inline Report check(const LossFn& f, std::vector<Tensor> params, double step = 1e-6, double floor = 1e-3) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape, params);
    tape.backward(loss);
  }
  Report rep;
  for (auto& p : params) {
    const auto analytic = p.grad();
    auto& v = p.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + step;
      const double up = eval_loss(f, params);
      v[i] = orig - step;
      const double down = eval_loss(f, params);
      v[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - numeric) / scale);
      ++rep.checked;
    }
  }
  return rep;
}

inline Tensor random_param(linkbench::ad::Shape shape, linkbench::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(linkbench::ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace fdcheck
