#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "critic_builders.hpp"
#include "dna/checkpoint.hpp"
#include "dna/grad_check.hpp"
#include "dna/losses.hpp"
#include "dna/model.hpp"
#include "oracles.hpp"

using namespace dna;

namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.branches = 3;
  a.unet_width = 4;
  a.unet_groups = 2;
  a.critic_base = 2;
  a.filter_channels = {1, 4, 4, 1};
  return a;
}

GeometryConfig small_geo(Index n = 16, Index v = 4) {
  GeometryConfig g;
  g.image_size = n;
  g.num_views = v;
  return g;
}

}  // namespace

TEST_CASE("unet preserves spatial dims for any N divisible by 16") {
  Rng rng(1);
  for (Index n : {16, 32, 48}) {
    auto p = UNetParams<float>::init(1, 4, 2, rng);
    TensorF x = TensorF::randn({1, 1, n, n}, rng.stream(n));
    TensorF y = unet_forward(x, p);
    CHECK(y.dim(0) == 1);
    CHECK(y.dim(1) == 1);
    CHECK(y.dim(2) == n);
    CHECK(y.dim(3) == n);
  }
  auto p = UNetParams<float>::init(1, 4, 2, rng);
  CHECK_THROWS_AS(unet_forward(TensorF({1, 1, 24, 24}), p), std::invalid_argument);
}

TEST_CASE("identity-initialized pipeline equals analytic FBP bitwise") {
  auto geo = small_geo(32, 5);
  auto params = DnaParams<float>::identity(geo, small_arch());
  Rng rng(7);
  TensorF img = circle_mask(TensorF::rand_uniform({2, 1, 32, 32}, rng));
  TensorF sino = radon_forward_batch(img, geo);

  TensorF i1 = g1_forward(sino, params, geo);
  TensorF fbp = fbp_reconstruct_batch(sino, geo);
  for (Index i = 0; i < i1.numel(); ++i) {
    CHECK(i1[i] == fbp[i]);
    if (i1[i] != fbp[i]) break;
  }

  TensorF i2 = g2_forward(fbp, i1, params);
  for (Index i = 0; i < i2.numel(); ++i) {
    CHECK(i2[i] == i1[i]);
    if (i2[i] != i1[i]) break;
  }
}

TEST_CASE("g1/g2 output shape law") {
  for (Index n : {32, 64}) {
    auto geo = small_geo(n, 4);
    auto params = DnaParams<float>::init(geo, small_arch(), Rng(3));
    Rng rng(4);
    TensorF sino = TensorF::randn({1, 1, 4, n}, rng);
    TensorF i1 = g1_forward(sino, params, geo);
    CHECK(i1.dim(2) == n);
    CHECK(i1.dim(3) == n);
  }
}

TEST_CASE("critic: zero weights score zero, fixed input scores deterministically") {
  auto p = CriticParams<float>::zero(16, 2);
  Rng rng(5);
  TensorF x = TensorF::randn({3, 1, 16, 16}, rng);
  TensorF s = critic_forward(x, p);
  for (Index b = 0; b < 3; ++b) CHECK(s[b] == 0.0f);

  auto pi = CriticParams<float>::init(16, 2, rng.stream(1));
  TensorF s1 = critic_forward(x, pi);
  TensorF s2 = critic_forward(x, pi);
  for (Index b = 0; b < 3; ++b) CHECK(s1[b] == s2[b]);
}

TEST_CASE("constructed pass-through critic computes the spatial mean") {
  const Index N = 16;
  auto p = testutil::mean_critic<float>(N);
  Rng rng(6);
  TensorF x = TensorF::randn({2, 1, N, N}, rng);
  TensorF s = critic_forward(x, p);
  for (Index b = 0; b < 2; ++b) {
    double mean = 0;
    for (Index i = 0; i < N * N; ++i) mean += x[b * N * N + i];
    mean /= double(N * N);
    CHECK(std::abs(double(s[b]) - mean) < 1e-5);
  }
}

TEST_CASE("critic_forward gradients: double FD check and float/double agreement") {
  // The critic is deep and piecewise linear: a float finite-difference probe
  // is dominated by activation-kink crossings at usable step sizes, so the
  // FD verification runs in the 64-bit instantiation at its tighter bound,
  // and the 32-bit gradient path is checked directly against the 64-bit one.
  const Index N = 16;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);

    auto run_vjp = [&](auto scalar_tag, auto& grads_out) {
      using S = decltype(scalar_tag);
      auto p = CriticParams<S>::init(N, 2, rng.stream(40));
      Tensor<S> x = Tensor<S>::randn({2, 1, N, N}, rng.stream(50));
      Tensor<S> red = Tensor<S>::randn({2}, rng.stream(60));
      p.for_each_layer("c", [](const std::string&, ConvLayer<S>& l) {
        l.w.grad();
        l.b.grad();
      });
      p.fc1_w.grad();
      p.fc1_b.grad();
      p.fc2_w.grad();
      p.fc2_b.grad();
      CriticTrace<S> tr;
      critic_forward(x, p, &tr);
      Tensor<S> dx = critic_backward(p, tr, red, true);
      grads_out.clear();
      auto push = [&](const typename Tensor<S>::Array& g) {
        for (Index i = 0; i < g.size(); ++i) grads_out.push_back(double(g[i]));
      };
      push(dx.array());
      p.for_each_layer("c", [&](const std::string&, ConvLayer<S>& l) {
        push(l.w.grad());
        push(l.b.grad());
      });
      push(p.fc1_w.grad());
      push(p.fc1_b.grad());
      push(p.fc2_w.grad());
      push(p.fc2_b.grad());
    };

    // 64-bit FD verification
    {
      auto base = CriticParams<double>::init(N, 2, rng.stream(40));
      Primitive<double> prim;
      prim.forward = [&](const std::vector<TensorD>& in) {
        auto p = base;
        p.conv[0].w = in[1];
        return critic_forward(in[0], p);
      };
      prim.vjp = [&](const std::vector<TensorD>& in, const TensorD& cot) {
        auto p = base;
        p.conv[0].w = in[1];
        p.conv[0].w.grad();
        CriticTrace<double> tr;
        critic_forward(in[0], p, &tr);
        TensorD dx = critic_backward(p, tr, cot, true);
        TensorD dw(p.conv[0].w.shape());
        dw.array() = p.conv[0].w.grad();
        return std::vector<TensorD>{dx, dw};
      };
      GradCheckOptions opt;
      opt.eps = 1e-5;
      opt.max_probes_per_input = 64;
      CHECK(grad_check(prim, {TensorD::randn({2, 1, N, N}, rng.stream(50)), base.conv[0].w},
                       rng, opt) < 1e-4);
    }

    // 32-bit vs 64-bit gradient agreement
    std::vector<double> gf, gd;
    run_vjp(float(0), gf);
    run_vjp(double(0), gd);
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

TEST_CASE("one generator backward reaches every generator parameter and no critic one") {
  auto geo = small_geo(16, 4);
  auto params = DnaParams<float>::init(geo, small_arch(), Rng(11));
  Rng rng(12);
  TensorF truth = circle_mask(TensorF::rand_uniform({2, 1, 16, 16}, rng.stream(1)));
  TensorF sino = radon_forward_batch(truth, geo);
  TensorF fbp = fbp_reconstruct_batch(sino, geo);

  params.zero_generator_grads();
  params.zero_critic_grads();

  G1Trace<float> tr1;
  G2Trace<float> tr2;
  TensorF i1 = g1_forward(sino, params, geo, &tr1);
  TensorF i2 = g2_forward(fbp, i1, params, &tr2);

  TensorF cot_i2 = mse_loss_grad_x(truth, i2);
  TensorF cot_i1 = g2_backward(params, tr2, cot_i2);
  cot_i1.array() += mse_loss_grad_x(truth, i1).array();
  g1_backward(params, geo, tr1, cot_i1);

  params.for_each_generator_param([&](const std::string& name, TensorF& t) {
    const double norm = std::sqrt(double(t.grad().square().sum()));
    CAPTURE(name);
    CHECK(norm > 0.0);
  });
  params.for_each_critic_param([&](const std::string& name, TensorF& t) {
    const double norm = std::sqrt(double(t.grad().square().sum()));
    CAPTURE(name);
    CHECK(norm == 0.0);
  });
}

TEST_CASE("checkpoint round trip and magic rejection") {
  NamedTensors<float> nt;
  Rng rng(13);
  nt.add("alpha", TensorF::randn({3, 4}, rng.stream(1)));
  nt.add("beta.very.long_name", TensorF::randn({2, 2, 2}, rng.stream(2)));
  const std::string path = "/tmp/dna_test_ckpt.dna";
  save_checkpoint(path, nt);
  auto back = load_checkpoint<float>(path);
  CHECK(back.items.size() == 2);
  for (const auto& [name, t] : nt.items) {
    const TensorF& got = back.at(name);
    CHECK(got.shape() == t.shape());
    for (Index i = 0; i < t.numel(); ++i) CHECK(got[i] == t[i]);
  }
  CHECK(back.find("gamma") == nullptr);
  CHECK_THROWS_AS(back.at("gamma"), std::invalid_argument);

  {
    std::ofstream f("/tmp/dna_bad_magic.dna", std::ios::binary);
    f << "NOPE" << std::string(64, '\0');
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<float>("/tmp/dna_bad_magic.dna"),
                       doctest::Contains("unknown magic"), std::runtime_error);

  std::remove(path.c_str());
  std::remove("/tmp/dna_bad_magic.dna");
}

TEST_CASE("parameter count matches the closed-form law for the bp block") {
  auto geo = small_geo(16, 4);
  auto arch = small_arch();
  auto params = DnaParams<float>::init(geo, arch, Rng(14));
  CHECK(params.bp.param_count() == bp_param_count(arch.branches, 16, 4));
  long long total = params.param_count();
  CHECK(total > params.bp.param_count());
}
