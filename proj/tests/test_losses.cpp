#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "critic_builders.hpp"
#include "dna/grad_check.hpp"
#include "dna/losses.hpp"
#include "dna/metrics.hpp"
#include "oracles.hpp"

using namespace dna;

TEST_CASE("mse trivia and oracle") {
  TensorF x = TensorF::from({1, 1, 1, 2}, {0, 0});
  TensorF y = TensorF::from({1, 1, 1, 2}, {1, 0});
  CHECK(mse_loss(y, y) == 0.0f);
  CHECK(mse_loss(y, x) == doctest::Approx(0.5));

  Rng rng(1);
  TensorF a = TensorF::randn({2, 1, 5, 5}, rng.stream(1));
  TensorF b = TensorF::randn({2, 1, 5, 5}, rng.stream(2));
  double direct = 0;
  for (Index i = 0; i < a.numel(); ++i)
    direct += (double(a[i]) - double(b[i])) * (double(a[i]) - double(b[i]));
  direct /= double(a.numel());
  CHECK(std::abs(double(mse_loss(a, b)) - direct) < 1e-6);

  CHECK_THROWS_AS(mse_loss(a, TensorF({2, 1, 5, 4})), std::invalid_argument);
}

TEST_CASE("ssim: exact identity, degenerate constants, closed-form 2x2 case") {
  Rng rng(2);
  TensorF x = TensorF::rand_uniform({1, 1, 6, 6}, rng);
  CHECK(ssim(x, x) == 1.0f);

  TensorF half = TensorF::full({1, 1, 4, 4}, 0.5f);
  TensorF inv(half.shape());
  inv.array() = 1.0f - half.array();
  CHECK(ssim(half, inv) == doctest::Approx(1.0));

  // Y=[[0,0],[1,1]], X=0: direct evaluation of the formula
  TensorF Y = TensorF::from({2, 2}, {0, 0, 1, 1});
  TensorF X({2, 2});
  const double muY = 0.5, muX = 0, vY = 0.25, vX = 0, cov = 0;
  const double C1 = 1e-4, C2 = 9e-4;
  const double expect =
      ((2 * muY * muX + C1) * (2 * cov + C2)) / ((muY * muY + muX * muX + C1) * (vY + vX + C2));
  CHECK(std::abs(double(ssim_single(Y, X)) - expect) < 1e-6);
  CHECK(std::abs(double(ssim_single(Y, X)) - oracle::ssim_direct(Y, X)) < 1e-9);
}

TEST_CASE("ssim symmetry and upper bound") {
  Rng rng(3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    TensorF a = TensorF::rand_uniform({1, 1, 8, 8}, rng.stream(2 * s));
    TensorF b = TensorF::rand_uniform({1, 1, 8, 8}, rng.stream(2 * s + 1));
    CHECK(std::abs(double(ssim(a, b)) - double(ssim(b, a))) < 1e-7);
    CHECK(double(ssim(a, b)) <= 1.0);
    // perturbation strictly below 1
    TensorF c = a;
    c[0] += 0.25f;
    CHECK(double(ssim(a, c)) < 1.0);
  }
}

TEST_CASE("ssim matches the direct-formula oracle on random pairs") {
  Rng rng(4);
  for (std::uint64_t s = 0; s < 5; ++s) {
    TensorF a = TensorF::rand_uniform({4, 4}, rng.stream(2 * s));
    TensorF b = TensorF::rand_uniform({4, 4}, rng.stream(2 * s + 1));
    CHECK(std::abs(double(ssim_single(a, b)) - oracle::ssim_direct(a, b)) < 1e-6);
  }
}

TEST_CASE("structural loss is 1 - ssim") {
  Rng rng(5);
  TensorF a = TensorF::rand_uniform({1, 1, 4, 4}, rng.stream(1));
  TensorF b = TensorF::rand_uniform({1, 1, 4, 4}, rng.stream(2));
  CHECK(structural_loss(a, a) == 0.0f);
  TensorF c1 = TensorF::full({1, 1, 4, 4}, 0.3f);
  CHECK(structural_loss(c1, c1) == 0.0f);
  CHECK(double(structural_loss(a, b)) == doctest::Approx(1.0 - double(ssim(a, b))));
}

TEST_CASE("ssim gradient passes grad_check") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(10 + seed);
    Primitive<float> prim;
    prim.forward = [](const std::vector<TensorF>& in) {
      TensorF out({1});
      out[0] = ssim(in[0], in[1]);
      return out;
    };
    prim.vjp = [](const std::vector<TensorF>& in, const TensorF& cot) {
      TensorF dy, dx;
      ssim_vjp(in[0], in[1], cot[0], &dx, &dy);
      return std::vector<TensorF>{dy, dx};
    };
    std::vector<TensorF> inputs{TensorF::rand_uniform({2, 1, 6, 6}, rng.stream(1)),
                                TensorF::rand_uniform({2, 1, 6, 6}, rng.stream(2))};
    GradCheckOptions opt;
    opt.eps = 5e-3;
    CHECK(grad_check(prim, inputs, rng, opt) < 1e-2);
  }
}

TEST_CASE("adversarial generator loss") {
  TensorF z({2});
  CHECK(adversarial_loss_g(z) == 0.0f);
  TensorF s = TensorF::from({2}, {1, 3});
  CHECK(adversarial_loss_g(s) == doctest::Approx(-2.0));
  TensorF g = adversarial_loss_g_grad(s);
  CHECK(g[0] == doctest::Approx(-0.5));
  CHECK(g[1] == doctest::Approx(-0.5));
}

TEST_CASE("sinogram consistency: exact fit, zero image, gradient") {
  GeometryConfig geo;
  geo.image_size = 16;
  geo.num_views = 4;
  Rng rng(6);
  TensorF img = circle_mask(TensorF::rand_uniform({1, 1, 16, 16}, rng.stream(1)));
  TensorF sino = radon_forward_batch(img, geo);
  CHECK(double(sinogram_consistency_loss(img, sino, geo)) == doctest::Approx(0.0));

  TensorF zero({1, 1, 16, 16});
  const double want = sino.array().cast<double>().square().mean();
  CHECK(double(sinogram_consistency_loss(zero, sino, geo)) == doctest::Approx(want));

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng r2(20 + seed);
    Primitive<float> prim;
    prim.forward = [&](const std::vector<TensorF>& in) {
      TensorF out({1});
      out[0] = sinogram_consistency_loss(in[0], sino, geo);
      return out;
    };
    prim.vjp = [&](const std::vector<TensorF>& in, const TensorF& cot) {
      return std::vector<TensorF>{sinogram_consistency_grad(in[0], sino, geo, cot[0])};
    };
    GradCheckOptions opt;
    opt.eps = 5e-3;
    CHECK(grad_check(prim, {TensorF::rand_uniform({1, 1, 16, 16}, r2)}, r2, opt) < 1e-2);
  }
}

TEST_CASE("gradient penalty: linear critic closed form, zero critic, nonnegativity") {
  const Index N = 16;
  Rng rng(7);
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<float> alpha(4);
    for (std::size_t i = 0; i < 4; ++i)
      alpha[i] = float(rng.uniform(10 * s + i, -0.03, 0.03));
    auto critic = testutil::linear_critic<float>(N, alpha);
    TensorF a = testutil::linear_critic_coefficients<float>(N, alpha);
    const double norm_a = std::sqrt(double(a.array().cast<double>().square().sum()));
    const double expect = (norm_a - 1.0) * (norm_a - 1.0);

    TensorF real = TensorF::rand_uniform({3, 1, N, N}, rng.stream(100 + s));
    TensorF fake = TensorF::rand_uniform({3, 1, N, N}, rng.stream(200 + s));
    const double got = double(gradient_penalty(critic, real, fake, rng.stream(300 + s)));
    CHECK(std::abs(got - expect) < 1e-5 * std::max(1.0, expect));
    CHECK(got >= 0.0);
  }

  auto zero_critic = CriticParams<float>::zero(N, 2);
  TensorF real = TensorF::rand_uniform({2, 1, N, N}, rng.stream(400));
  TensorF fake = TensorF::rand_uniform({2, 1, N, N}, rng.stream(401));
  CHECK(double(gradient_penalty(zero_critic, real, fake, rng.stream(402))) ==
        doctest::Approx(1.0));
}

TEST_CASE("gradient penalty parameter gradient: double FD check, float agreement") {
  // Same methodology as the critic check: FD in the 64-bit instantiation
  // (the penalty differentiates a piecewise-linear net twice), then 32-bit
  // gradients against 64-bit ones.
  const Index N = 16;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(30 + seed);

    auto grads_of = [&](auto scalar_tag, std::vector<double>& out) {
      using S = decltype(scalar_tag);
      auto p = CriticParams<S>::init(N, 2, rng.stream(1));
      Tensor<S> real = Tensor<S>::rand_uniform({2, 1, N, N}, rng.stream(2));
      Tensor<S> fake = Tensor<S>::rand_uniform({2, 1, N, N}, rng.stream(3));
      for (int l = 0; l < CriticParams<S>::kConvs; ++l) p.conv[l].w.grad();
      p.fc1_w.grad();
      p.fc2_w.grad();
      GradientPenaltyDetail<S> d;
      gradient_penalty(p, real, fake, rng.stream(4), &d);
      gradient_penalty_backward(p, d, S(1));
      out.clear();
      auto push = [&](const typename Tensor<S>::Array& g) {
        for (Index i = 0; i < g.size(); ++i) out.push_back(double(g[i]));
      };
      for (int l = 0; l < CriticParams<S>::kConvs; ++l) push(p.conv[l].w.grad());
      push(p.fc1_w.grad());
      push(p.fc2_w.grad());
    };

    // 64-bit FD over a representative parameter slice (conv3 weights + fc2)
    {
      auto base = CriticParams<double>::init(N, 2, rng.stream(1));
      TensorD real = TensorD::rand_uniform({2, 1, N, N}, rng.stream(2));
      TensorD fake = TensorD::rand_uniform({2, 1, N, N}, rng.stream(3));
      const Rng draw = rng.stream(4);
      Primitive<double> prim;
      prim.forward = [&](const std::vector<TensorD>& in) {
        auto p = base;
        p.conv[3].w = in[0];
        p.fc2_w = in[1];
        TensorD out({1});
        out[0] = gradient_penalty(p, real, fake, draw);
        return out;
      };
      prim.vjp = [&](const std::vector<TensorD>& in, const TensorD& cot) {
        auto p = base;
        p.conv[3].w = in[0];
        p.fc2_w = in[1];
        p.conv[3].w.grad();
        p.fc2_w.grad();
        GradientPenaltyDetail<double> d;
        gradient_penalty(p, real, fake, draw, &d);
        gradient_penalty_backward(p, d, cot[0]);
        TensorD dw(p.conv[3].w.shape()), dfc(p.fc2_w.shape());
        dw.array() = p.conv[3].w.grad();
        dfc.array() = p.fc2_w.grad();
        return std::vector<TensorD>{dw, dfc};
      };
      GradCheckOptions opt;
      opt.eps = 1e-5;
      opt.max_probes_per_input = 48;
      CHECK(grad_check(prim, {base.conv[3].w, base.fc2_w}, rng, opt) < 1e-4);
    }

    std::vector<double> gf, gd;
    grads_of(float(0), gf);
    grads_of(double(0), gd);
    REQUIRE(gf.size() == gd.size());
    double gmax = 0;
    for (double v : gd) gmax = std::max(gmax, std::abs(v));
    double worst = 0;
    for (std::size_t i = 0; i < gf.size(); ++i)
      worst = std::max(worst,
                       std::abs(gf[i] - gd[i]) /
                           std::max(std::max(std::abs(gf[i]), std::abs(gd[i])), 0.01 * gmax));
    CHECK(worst < 1e-2);
  }
}

TEST_CASE("critic objective arithmetic and monotonicity") {
  TensorF r = TensorF::from({1}, {1});
  TensorF f0 = TensorF::from({1}, {0});
  CHECK(double(critic_objective(r, f0, f0, 0.0f, 10.0f)) == doctest::Approx(-2.0));

  TensorF same = TensorF::from({2}, {0.4f, 0.4f});
  CHECK(double(critic_objective(same, same, same, 0.0f, 10.0f)) == doctest::Approx(0.0));

  TensorF lower = TensorF::from({1}, {-1});
  CHECK(double(critic_objective(r, lower, f0, 0.0f, 10.0f)) <
        double(critic_objective(r, f0, f0, 0.0f, 10.0f)));
}

TEST_CASE("generator objective weighting") {
  GeneratorTerms t;
  t.mse1 = 0.5;
  t.mse2 = 0.25;
  t.adv1 = -1;
  t.adv2 = -2;
  t.sl1 = 0.1;
  t.sl2 = 0.2;
  t.sino1 = 3;
  t.sino2 = 4;

  LossWeights w;
  w.lambda_q = 0;
  w.lambda_p = 0;
  w.lambda_r = 0;
  CHECK(generator_objective(t, w) == doctest::Approx(0.75));

  GeneratorTerms zero;
  CHECK(generator_objective(zero, w) == doctest::Approx(0.0));

  // affine in each lambda holding terms fixed
  LossWeights w1 = w, w2 = w;
  w1.lambda_q = 1;
  w2.lambda_q = 2;
  const double d1 = generator_objective(t, w1) - generator_objective(t, w);
  const double d2 = generator_objective(t, w2) - generator_objective(t, w1);
  CHECK(d1 == doctest::Approx(d2));
}

TEST_CASE("psnr and rmse") {
  Rng rng(9);
  TensorF x = TensorF::rand_uniform({8, 8}, rng);
  CHECK(rmse(x, x) == 0.0);
  CHECK(psnr(x, x) == kPsnrCap);

  TensorF y(x.shape());
  y.array() = x.array() + 0.1f;
  CHECK(rmse(y, x) == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(psnr(y, x) == doctest::Approx(20.0).epsilon(1e-4));

  TensorF a = TensorF::rand_uniform({6, 6}, rng.stream(1));
  TensorF b = TensorF::rand_uniform({6, 6}, rng.stream(2));
  double direct = 0;
  for (Index i = 0; i < a.numel(); ++i)
    direct += (double(a[i]) - double(b[i])) * (double(a[i]) - double(b[i]));
  direct = std::sqrt(direct / double(a.numel()));
  CHECK(rmse(a, b) == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("metrics report: csv layout and population mean/std") {
  MetricsReport rep;
  rep.rows = {{"a", 0.9, 30.0, 0.03}, {"b", 0.8, 28.0, 0.04}, {"c", 0.7, 26.0, 0.05}};
  const auto s = rep.summary();
  CHECK(s.ssim_mean == doctest::Approx(0.8));
  CHECK(s.psnr_mean == doctest::Approx(28.0));
  // population std of {26,28,30} = sqrt(8/3)
  CHECK(s.psnr_std == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(s.rmse_mean == doctest::Approx(0.04));

  const std::string csv = rep.to_csv();
  CHECK(csv.find("image_id,ssim,psnr_db,rmse") == 0);
  CHECK(csv.find("mean+-std,") != std::string::npos);
}
