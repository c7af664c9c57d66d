// Finite-difference verification of hand-derived VJPs.
//
// A Primitive packages a pure forward map over a list of input tensors with
// the corresponding vector-Jacobian product. grad_check reduces the output
// to a scalar with fixed random weights, evaluates the analytic gradient of
// that scalar through the VJP, and compares it against central finite
// differences, returning the worst relative error over all input elements.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dna/rng.hpp"
#include "dna/tensor.hpp"

namespace dna {

template <class Scalar>
struct Primitive {
  using Inputs = std::vector<Tensor<Scalar>>;
  // forward: inputs -> output
  std::function<Tensor<Scalar>(const Inputs&)> forward;
  // vjp: (inputs, output cotangent) -> one cotangent per input
  std::function<Inputs(const Inputs&, const Tensor<Scalar>&)> vjp;
};

struct GradCheckOptions {
  double eps = 1e-3;
  // Probe at most this many elements per input tensor (0 = all), spread
  // deterministically across the tensor.
  Index max_probes_per_input = 0;
};

template <class Scalar>
double grad_check(const Primitive<Scalar>& prim, std::vector<Tensor<Scalar>> inputs,
                  const Rng& rng, const GradCheckOptions& opt = {}) {
  Tensor<Scalar> y0 = prim.forward(inputs);
  y0.require_finite("grad_check: forward output");

  // Fixed reduction weights, scaled so the scalar stays O(1).
  const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(double(std::max<Index>(1, y0.numel()))));
  Tensor<Scalar> red = Tensor<Scalar>::randn(y0.shape(), rng.stream(0x9c0ffee), scale);

  // Accumulated in double so that output elements untouched by a probe
  // cancel exactly between the two sides of the central difference.
  auto reduce = [&](const Tensor<Scalar>& y) -> double {
    return (y.array().template cast<double>() * red.array().template cast<double>()).sum();
  };

  std::vector<Tensor<Scalar>> analytic = prim.vjp(inputs, red);
  require(analytic.size() == inputs.size(),
          "grad_check: vjp returned " + std::to_string(analytic.size()) + " gradients for " +
              std::to_string(inputs.size()) + " inputs");

  double gmax = 0.0;
  for (const auto& g : analytic) {
    g.require_finite("grad_check: analytic gradient");
    for (Index i = 0; i < g.numel(); ++i) gmax = std::max(gmax, std::abs(double(g[i])));
  }

  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Index n = inputs[t].numel();
    Index probes = opt.max_probes_per_input > 0 ? std::min(opt.max_probes_per_input, n) : n;
    const Index step = std::max<Index>(1, n / probes);
    for (Index i = 0; i < n; i += step) {
      const Scalar x0 = inputs[t][i];
      const double h = opt.eps * std::max(1.0, std::abs(double(x0)));
      inputs[t][i] = x0 + static_cast<Scalar>(h);
      const double fp = reduce(prim.forward(inputs));
      inputs[t][i] = x0 - static_cast<Scalar>(h);
      const double fm = reduce(prim.forward(inputs));
      inputs[t][i] = x0;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite intermediate in finite differences");
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = static_cast<double>(analytic[t][i]);
      const double denom = std::max(std::max(std::abs(ad), std::abs(fd)), 0.01 * gmax + 1e-30);
      worst = std::max(worst, std::abs(ad - fd) / denom);
    }
  }
  return worst;
}

}  // namespace dna
