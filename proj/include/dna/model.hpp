// The full dual-generator model.
//
// G1 maps a sinogram batch to an intermediate image: Fourier ramp ->
// learnable filter stack -> point-wise backprojection -> circle mask ->
// refinement U-net added as a residual correction. G2 concatenates the
// analytic FBP image with G1's output and adds its own U-net correction on
// top of G1. With zero U-nets, an identity filter stack and unit
// backprojection weights the whole generator path reduces exactly to
// fbp_reconstruct — the anchor every training run starts from.
#pragma once

#include <string>

#include "dna/backprojection.hpp"
#include "dna/critic.hpp"
#include "dna/filtration.hpp"
#include "dna/geometry.hpp"
#include "dna/unet.hpp"

namespace dna {

struct ArchConfig {
  Index branches = 23;  // point-wise backprojection branch count C
  Index unet_width = 36;
  Index unet_groups = 4;
  Index critic_base = 64;
  std::vector<Index> filter_channels = {1, 8, 8, 1};
};

template <class Scalar>
struct DnaParams {
  ArchConfig arch;
  FilterStackParams<Scalar> filter;
  PointwiseBPParams<Scalar> bp;
  UNetParams<Scalar> unet_g1;
  UNetParams<Scalar> unet_g2;
  CriticParams<Scalar> critic;

  // Exact analytic-FBP configuration: identity filter, unit weights, zero
  // U-nets and critic.
  static DnaParams identity(const GeometryConfig& geo, const ArchConfig& arch) {
    geo.validate();
    DnaParams p;
    p.arch = arch;
    p.filter = FilterStackParams<Scalar>::identity(geo.detectors(), arch.filter_channels);
    p.bp = PointwiseBPParams<Scalar>::identity(arch.branches, geo.num_views, geo.image_size);
    p.unet_g1 = UNetParams<Scalar>::zero(1, arch.unet_width, arch.unet_groups);
    p.unet_g2 = UNetParams<Scalar>::zero(2, arch.unet_width, arch.unet_groups);
    p.critic = CriticParams<Scalar>::zero(geo.image_size, arch.critic_base);
    return p;
  }

  // Training start: FBP-anchored with symmetry-breaking noise.
  static DnaParams init(const GeometryConfig& geo, const ArchConfig& arch, const Rng& rng) {
    geo.validate();
    DnaParams p;
    p.arch = arch;
    p.filter =
        FilterStackParams<Scalar>::init(geo.detectors(), rng.stream(1), Scalar(0.01),
                                        arch.filter_channels);
    p.bp = PointwiseBPParams<Scalar>::init(arch.branches, geo.num_views, geo.image_size,
                                           rng.stream(2));
    p.unet_g1 = UNetParams<Scalar>::init(1, arch.unet_width, arch.unet_groups, rng.stream(3));
    p.unet_g2 = UNetParams<Scalar>::init(2, arch.unet_width, arch.unet_groups, rng.stream(4));
    p.critic = CriticParams<Scalar>::init(geo.image_size, arch.critic_base, rng.stream(5));
    return p;
  }

  template <class F>
  void for_each_generator_param(F&& f) {
    for (std::size_t l = 0; l < filter.layers.size(); ++l) {
      f("filter.l" + std::to_string(l) + ".w", filter.layers[l].w);
      f("filter.l" + std::to_string(l) + ".b", filter.layers[l].b);
    }
    f("bp.weights", bp.weights);
    f("bp.biases", bp.biases);
    unet_g1.for_each_layer("g1", [&](const std::string& n, ConvLayer<Scalar>& layer) {
      f(n + ".w", layer.w);
      f(n + ".b", layer.b);
    });
    unet_g2.for_each_layer("g2", [&](const std::string& n, ConvLayer<Scalar>& layer) {
      f(n + ".w", layer.w);
      f(n + ".b", layer.b);
    });
  }

  template <class F>
  void for_each_critic_param(F&& f) {
    critic.for_each_layer("critic", [&](const std::string& n, ConvLayer<Scalar>& layer) {
      f(n + ".w", layer.w);
      f(n + ".b", layer.b);
    });
    f("critic.fc1.w", critic.fc1_w);
    f("critic.fc1.b", critic.fc1_b);
    f("critic.fc2.w", critic.fc2_w);
    f("critic.fc2.b", critic.fc2_b);
  }

  template <class F>
  void for_each_param(F&& f) {
    for_each_generator_param(f);
    for_each_critic_param(f);
  }

  long long param_count() {
    long long n = 0;
    for_each_param([&](const std::string&, Tensor<Scalar>& t) { n += t.numel(); });
    return n;
  }

  void zero_generator_grads() {
    for_each_generator_param([](const std::string&, Tensor<Scalar>& t) {
      t.grad();
      t.zero_grad();
    });
  }
  void zero_critic_grads() {
    for_each_critic_param([](const std::string&, Tensor<Scalar>& t) {
      t.grad();
      t.zero_grad();
    });
  }
};

template <class Scalar>
struct G1Trace {
  Tensor<Scalar> lf_in;  // ramp-filtered sinogram (input to the learned stack)
  FilterTrace<Scalar> filter;
  Tensor<Scalar> lf_out;
  UNetTrace<Scalar> unet;
};

// sino: [B,1,V,N] -> intermediate image [B,1,N,N]
template <class Scalar>
Tensor<Scalar> g1_forward(const Tensor<Scalar>& sino, DnaParams<Scalar>& params,
                          const GeometryConfig& geo, G1Trace<Scalar>* tr = nullptr) {
  Tensor<Scalar> filt = ramp_filter(sino);
  if (tr) tr->lf_in = filt;
  Tensor<Scalar> lf = learned_filter(filt, params.filter, tr ? &tr->filter : nullptr);
  if (tr) tr->lf_out = lf;
  Tensor<Scalar> bpm = circle_mask(pointwise_backproject_batch(lf, params.bp, geo));
  Tensor<Scalar> correction = unet_forward(bpm, params.unet_g1, tr ? &tr->unet : nullptr);
  correction.array() += bpm.array();
  return correction;
}

// Accumulates generator gradients; returns nothing upstream (the sinogram is
// data, not a trainable input).
template <class Scalar>
void g1_backward(DnaParams<Scalar>& params, const GeometryConfig& geo, const G1Trace<Scalar>& tr,
                 const Tensor<Scalar>& cot_i1) {
  Tensor<Scalar> cot_bpm = unet_backward(params.unet_g1, tr.unet, cot_i1);
  cot_bpm.array() += cot_i1.array();  // residual add
  Tensor<Scalar> cot_bp = circle_mask(cot_bpm);

  Tensor<Scalar> cot_lf, dw, db;
  pointwise_backproject_vjp(tr.lf_out, params.bp, geo, cot_bp, &cot_lf, &dw, &db);
  params.bp.weights.accumulate_grad(dw);
  params.bp.biases.accumulate_grad(db);

  std::vector<Tensor<Scalar>> dws, dbs;
  learned_filter_vjp(params.filter, tr.filter, cot_lf, &dws, &dbs);
  for (std::size_t l = 0; l < params.filter.layers.size(); ++l) {
    params.filter.layers[l].w.accumulate_grad(dws[l]);
    params.filter.layers[l].b.accumulate_grad(dbs[l]);
  }
}

template <class Scalar>
struct G2Trace {
  UNetTrace<Scalar> unet;
};

// fbp_img, g1_img: [B,1,N,N] -> final image [B,1,N,N]
template <class Scalar>
Tensor<Scalar> g2_forward(const Tensor<Scalar>& fbp_img, const Tensor<Scalar>& g1_img,
                          DnaParams<Scalar>& params, G2Trace<Scalar>* tr = nullptr) {
  check_same_shape(fbp_img, g1_img, "g2_forward");
  Tensor<Scalar> cat = concat_channels(fbp_img, g1_img);
  Tensor<Scalar> correction = unet_forward(cat, params.unet_g2, tr ? &tr->unet : nullptr);
  correction.array() += g1_img.array();
  return correction;
}

// Returns the cotangent w.r.t. g1_img (the FBP input is not trainable).
template <class Scalar>
Tensor<Scalar> g2_backward(DnaParams<Scalar>& params, const G2Trace<Scalar>& tr,
                           const Tensor<Scalar>& cot_i2) {
  Tensor<Scalar> cot_cat = unet_backward(params.unet_g2, tr.unet, cot_i2);
  Tensor<Scalar> cot_g1 = slice_channels(cot_cat, 1, 1);
  cot_g1.array() += cot_i2.array();  // residual add
  return cot_g1;
}

}  // namespace dna
