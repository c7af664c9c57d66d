// Objective terms for the two generators and the critic, plus their VJPs.
//
// SSIM is computed from global image statistics (means, variances,
// covariance over the whole image, population normalization), one value per
// batch item, averaged over the batch. The gradient penalty interpolates
// real and fake items with per-item uniform weights and penalizes the
// deviation of the critic's input-gradient norm from 1.
#pragma once

#include <cmath>

#include "dna/critic.hpp"
#include "dna/geometry.hpp"
#include "dna/tensor.hpp"

namespace dna {

struct LossWeights {
  double lambda_q = 5e-3;  // adversarial terms
  double lambda_p = 0.1;   // structural terms
  double lambda_r = 1.0;   // sinogram-consistency terms
  double lambda_gp = 10.0; // critic gradient penalty

  void validate() const {
    require(lambda_q >= 0 && lambda_p >= 0 && lambda_r >= 0 && lambda_gp >= 0 &&
                std::isfinite(lambda_q) && std::isfinite(lambda_p) && std::isfinite(lambda_r) &&
                std::isfinite(lambda_gp),
            "loss weights must be finite and nonnegative");
  }
};

// ---------------------------------------------------------------------------
// MSE
// ---------------------------------------------------------------------------

template <class Scalar>
Scalar mse_loss(const Tensor<Scalar>& y, const Tensor<Scalar>& x) {
  check_same_shape(y, x, "mse_loss");
  return static_cast<Scalar>(
      (y.array().template cast<double>() - x.array().template cast<double>()).square().mean());
}

// d mse / d x; the gradient w.r.t. y is its negation.
template <class Scalar>
Tensor<Scalar> mse_loss_grad_x(const Tensor<Scalar>& y, const Tensor<Scalar>& x, Scalar cot = 1) {
  Tensor<Scalar> g(x.shape());
  g.array() = cot * Scalar(2) / static_cast<Scalar>(x.numel()) * (x.array() - y.array());
  return g;
}

// ---------------------------------------------------------------------------
// SSIM (global statistics)
// ---------------------------------------------------------------------------

template <class Scalar>
struct SsimStats {
  double mu_y, mu_x, var_y, var_x, cov;
  double a1, a2, b1, b2, value;
};

template <class Scalar>
SsimStats<Scalar> ssim_stats(const Scalar* y, const Scalar* x, Index n, double r, double k1,
                             double k2) {
  SsimStats<Scalar> s{};
  double my = 0, mx = 0;
  for (Index i = 0; i < n; ++i) {
    my += double(y[i]);
    mx += double(x[i]);
  }
  my /= double(n);
  mx /= double(n);
  double vy = 0, vx = 0, cov = 0;
  for (Index i = 0; i < n; ++i) {
    const double dy = double(y[i]) - my, dx = double(x[i]) - mx;
    vy += dy * dy;
    vx += dx * dx;
    cov += dy * dx;
  }
  vy /= double(n);
  vx /= double(n);
  cov /= double(n);
  const double c1 = (k1 * r) * (k1 * r), c2 = (k2 * r) * (k2 * r);
  s.mu_y = my;
  s.mu_x = mx;
  s.var_y = vy;
  s.var_x = vx;
  s.cov = cov;
  s.a1 = 2 * my * mx + c1;
  s.a2 = 2 * cov + c2;
  s.b1 = my * my + mx * mx + c1;
  s.b2 = vy + vx + c2;
  s.value = (s.a1 * s.a2) / (s.b1 * s.b2);
  return s;
}

// Per-image SSIM of a single pair (rank >= 2 treated as one image).
template <class Scalar>
Scalar ssim_single(const Tensor<Scalar>& y, const Tensor<Scalar>& x, double r = 1.0,
                   double k1 = 0.01, double k2 = 0.03) {
  check_same_shape(y, x, "ssim");
  return static_cast<Scalar>(ssim_stats(y.data(), x.data(), y.numel(), r, k1, k2).value);
}

// Batch SSIM: mean of per-item values over [B, ...] tensors.
template <class Scalar>
Scalar ssim(const Tensor<Scalar>& y, const Tensor<Scalar>& x, double r = 1.0, double k1 = 0.01,
            double k2 = 0.03) {
  check_same_shape(y, x, "ssim");
  require(y.rank() >= 1, "ssim: scalar input");
  const Index B = y.rank() >= 2 ? y.dim(0) : 1;
  const Index n = y.numel() / B;
  double acc = 0;
  for (Index b = 0; b < B; ++b)
    acc += ssim_stats(y.data() + b * n, x.data() + b * n, n, r, k1, k2).value;
  return static_cast<Scalar>(acc / double(B));
}

// Gradients of cot * ssim(y, x) w.r.t. x and (optionally) y.
template <class Scalar>
void ssim_vjp(const Tensor<Scalar>& y, const Tensor<Scalar>& x, Scalar cot, Tensor<Scalar>* dx,
              Tensor<Scalar>* dy, double r = 1.0, double k1 = 0.01, double k2 = 0.03) {
  check_same_shape(y, x, "ssim_vjp");
  const Index B = y.rank() >= 2 ? y.dim(0) : 1;
  const Index n = y.numel() / B;
  if (dx) *dx = Tensor<Scalar>(x.shape());
  if (dy) *dy = Tensor<Scalar>(y.shape());
  const double outer = double(cot) / double(B);

  for (Index b = 0; b < B; ++b) {
    const Scalar* yp = y.data() + b * n;
    const Scalar* xp = x.data() + b * n;
    const auto s = ssim_stats(yp, xp, n, r, k1, k2);
    const double v = s.value;
    // dS/d(stat): quotient rule on S = (a1 a2) / (b1 b2)
    const double d_mu_x = v * (2 * s.mu_y / s.a1 - 2 * s.mu_x / s.b1);
    const double d_mu_y = v * (2 * s.mu_x / s.a1 - 2 * s.mu_y / s.b1);
    const double d_var = -v / s.b2;       // same for var_x and var_y
    const double d_cov = 2 * v / s.a2;
    if (dx) {
      Scalar* g = dx->data() + b * n;
      for (Index i = 0; i < n; ++i)
        g[i] = static_cast<Scalar>(outer / double(n) *
                                   (d_mu_x + 2 * (double(xp[i]) - s.mu_x) * d_var +
                                    (double(yp[i]) - s.mu_y) * d_cov));
    }
    if (dy) {
      Scalar* g = dy->data() + b * n;
      for (Index i = 0; i < n; ++i)
        g[i] = static_cast<Scalar>(outer / double(n) *
                                   (d_mu_y + 2 * (double(yp[i]) - s.mu_y) * d_var +
                                    (double(xp[i]) - s.mu_x) * d_cov));
    }
  }
}

template <class Scalar>
Scalar structural_loss(const Tensor<Scalar>& y, const Tensor<Scalar>& x) {
  return Scalar(1) - ssim(y, x);
}

// ---------------------------------------------------------------------------
// Adversarial terms
// ---------------------------------------------------------------------------

template <class Scalar>
Scalar adversarial_loss_g(const Tensor<Scalar>& scores) {
  return static_cast<Scalar>(-scores.array().template cast<double>().mean());
}

template <class Scalar>
Tensor<Scalar> adversarial_loss_g_grad(const Tensor<Scalar>& scores, Scalar cot = 1) {
  Tensor<Scalar> g(scores.shape());
  g.array() = -cot / static_cast<Scalar>(scores.numel());
  return g;
}

// mean(fake1) + mean(fake2) - 2*mean(real) + lambda_gp * gp
template <class Scalar>
Scalar critic_objective(const Tensor<Scalar>& real_scores, const Tensor<Scalar>& fake1_scores,
                        const Tensor<Scalar>& fake2_scores, Scalar gp, Scalar lambda_gp) {
  const double m_r = real_scores.array().template cast<double>().mean();
  const double m_f1 = fake1_scores.array().template cast<double>().mean();
  const double m_f2 = fake2_scores.array().template cast<double>().mean();
  return static_cast<Scalar>(m_f1 + m_f2 - 2.0 * m_r + double(lambda_gp) * double(gp));
}

// ---------------------------------------------------------------------------
// Sinogram consistency (Eq.-7-style data fit)
// ---------------------------------------------------------------------------

template <class Scalar>
Scalar sinogram_consistency_loss(const Tensor<Scalar>& img_batch, const Tensor<Scalar>& sino_batch,
                                 const GeometryConfig& geo) {
  Tensor<Scalar> synth = radon_forward_batch(img_batch, geo);
  check_same_shape(synth, sino_batch, "sinogram_consistency_loss");
  return mse_loss(sino_batch, synth);
}

template <class Scalar>
Tensor<Scalar> sinogram_consistency_grad(const Tensor<Scalar>& img_batch,
                                         const Tensor<Scalar>& sino_batch,
                                         const GeometryConfig& geo, Scalar cot = 1) {
  Tensor<Scalar> synth = radon_forward_batch(img_batch, geo);
  Tensor<Scalar> diff(synth.shape());
  diff.array() =
      cot * Scalar(2) / static_cast<Scalar>(synth.numel()) * (synth.array() - sino_batch.array());
  return radon_adjoint_batch(diff, geo);
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

template <class Scalar>
struct GradientPenaltyDetail {
  Tensor<Scalar> interp;        // [B,1,N,N]
  CriticTrace<Scalar> trace;    // critic trace at the interpolation points
  Tensor<Scalar> input_grad;    // dD/dx per item
  Tensor<Scalar> norms;         // [B]
};

// penalty = mean_b (|| dD/dx at interp_b ||_2 - 1)^2, with interp_b drawn
// per item as eps*real + (1-eps)*fake, eps ~ U[0,1) from the given stream.
template <class Scalar>
Scalar gradient_penalty(CriticParams<Scalar>& critic, const Tensor<Scalar>& real_batch,
                        const Tensor<Scalar>& fake_batch, const Rng& rng,
                        GradientPenaltyDetail<Scalar>* detail = nullptr) {
  check_same_shape(real_batch, fake_batch, "gradient_penalty");
  const Index B = real_batch.dim(0);
  const Index n = real_batch.numel() / B;

  GradientPenaltyDetail<Scalar> local;
  GradientPenaltyDetail<Scalar>& d = detail ? *detail : local;

  d.interp = Tensor<Scalar>(real_batch.shape());
  for (Index b = 0; b < B; ++b) {
    const Scalar eps = static_cast<Scalar>(rng.uniform(static_cast<std::uint64_t>(b)));
    d.interp.chunk(b * n, n) =
        eps * real_batch.chunk(b * n, n) + (Scalar(1) - eps) * fake_batch.chunk(b * n, n);
  }

  critic_forward(d.interp, critic, &d.trace);
  d.input_grad = critic_input_gradient(critic, d.trace, B);

  d.norms = Tensor<Scalar>({B});
  double acc = 0;
  for (Index b = 0; b < B; ++b) {
    const double nb =
        std::sqrt(d.input_grad.chunk(b * n, n).template cast<double>().square().sum());
    d.norms[b] = static_cast<Scalar>(nb);
    acc += (nb - 1.0) * (nb - 1.0);
  }
  return static_cast<Scalar>(acc / double(B));
}

// Accumulates weight * dPenalty/dtheta into the critic's gradient buffers.
template <class Scalar>
void gradient_penalty_backward(CriticParams<Scalar>& critic,
                               const GradientPenaltyDetail<Scalar>& d, Scalar weight) {
  const Index B = d.norms.numel();
  const Index n = d.input_grad.numel() / B;
  Tensor<Scalar> u(d.input_grad.shape());
  for (Index b = 0; b < B; ++b) {
    const double nb = double(d.norms[b]);
    const double coef = nb > 1e-12 ? double(weight) * 2.0 * (nb - 1.0) / (nb * double(B)) : 0.0;
    u.chunk(b * n, n) = static_cast<Scalar>(coef) * d.input_grad.chunk(b * n, n);
  }
  critic_penalty_param_grad(critic, d.trace, u);
}

// ---------------------------------------------------------------------------
// Combined generator objective (weighted sum of the per-generator terms)
// ---------------------------------------------------------------------------

struct GeneratorTerms {
  double adv1 = 0, adv2 = 0;
  double sl1 = 0, sl2 = 0;
  double sino1 = 0, sino2 = 0;
  double mse1 = 0, mse2 = 0;
};

inline double generator_objective(const GeneratorTerms& t, const LossWeights& w) {
  return w.lambda_q * (t.adv1 + t.adv2) + w.lambda_p * (t.sl1 + t.sl2) +
         w.lambda_r * (t.sino1 + t.sino2) + t.mse1 + t.mse2;
}

}  // namespace dna
