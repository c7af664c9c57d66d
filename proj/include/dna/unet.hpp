// Refinement U-net: 4 stride-2 encoder stages and 4 stride-2 decoder stages
// at constant channel width, 3x3 kernels throughout, skip concatenations per
// stage, and grouped-convolution residual blocks (ResNeXt-style cardinality).
// Down/up layers and hidden convs are followed by ReLU; the output head is a
// linear 3x3 projection so the predicted correction can take either sign.
// Spatial dims are preserved end to end for any input divisible by 16.
#pragma once

#include <array>
#include <vector>

#include "dna/conv.hpp"
#include "dna/tensor.hpp"

namespace dna {

template <class Scalar>
struct ConvLayer {
  Tensor<Scalar> w, b;

  static ConvLayer shaped(Index cout, Index cin, Index k) {
    return {Tensor<Scalar>({cout, cin, k, k}), Tensor<Scalar>({cout})};
  }
  // Kaiming-style fan-in scaling.
  static ConvLayer he(Index cout, Index cin, Index k, const Rng& rng, Scalar gain = Scalar(1)) {
    const Scalar sigma = gain * std::sqrt(Scalar(2) / static_cast<Scalar>(cin * k * k));
    return {Tensor<Scalar>::randn({cout, cin, k, k}, rng, sigma), Tensor<Scalar>({cout})};
  }
};

template <class Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x, Tensor<Scalar>* mask = nullptr) {
  Tensor<Scalar> y(x.shape());
  y.array() = x.array().max(Scalar(0));
  if (mask) {
    *mask = Tensor<Scalar>(x.shape());
    mask->array() = (x.array() > Scalar(0)).template cast<Scalar>();
  }
  return y;
}

template <class Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(a.rank() == 4 && b.rank() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
              a.dim(3) == b.dim(3),
          "concat_channels: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
              " are not channel-concatenable");
  const Index B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  Tensor<Scalar> out({B, Ca + Cb, H, W});
  const Index plane = H * W;
  for (Index bi = 0; bi < B; ++bi) {
    out.chunk((bi * (Ca + Cb)) * plane, Ca * plane) = a.chunk(bi * Ca * plane, Ca * plane);
    out.chunk((bi * (Ca + Cb) + Ca) * plane, Cb * plane) = b.chunk(bi * Cb * plane, Cb * plane);
  }
  return out;
}

template <class Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& x, Index from, Index count) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(from >= 0 && from + count <= C, "slice_channels: range out of bounds");
  Tensor<Scalar> out({B, count, H, W});
  const Index plane = H * W;
  for (Index bi = 0; bi < B; ++bi)
    out.chunk(bi * count * plane, count * plane) = x.chunk((bi * C + from) * plane, count * plane);
  return out;
}

template <class Scalar>
struct UNetParams {
  static constexpr int kStages = 4;

  Index width = 36;
  Index groups = 4;
  Index in_channels = 1;

  struct Block {
    ConvLayer<Scalar> c1, c2;  // grouped 3x3 pair with residual add
  };

  ConvLayer<Scalar> stem;                     // in -> W
  std::array<Block, kStages> enc;
  std::array<ConvLayer<Scalar>, kStages> down;  // W -> W, stride 2
  Block bottleneck;
  std::array<ConvLayer<Scalar>, kStages> up;    // W -> W, transpose stride 2
  std::array<ConvLayer<Scalar>, kStages> fuse;  // 2W -> W, dense (mixes skip and deep path)
  ConvLayer<Scalar> head;                       // W -> 1, linear

  static UNetParams zero(Index in_channels, Index width, Index groups) {
    UNetParams p;
    p.width = width;
    p.groups = groups;
    p.in_channels = in_channels;
    const Index W = width, g = groups;
    require(W % g == 0, "unet: width must be divisible by groups");
    p.stem = ConvLayer<Scalar>::shaped(W, in_channels, 3);
    for (int s = 0; s < kStages; ++s) {
      p.enc[s].c1 = ConvLayer<Scalar>::shaped(W, W / g, 3);
      p.enc[s].c2 = ConvLayer<Scalar>::shaped(W, W / g, 3);
      p.down[s] = ConvLayer<Scalar>::shaped(W, W, 3);
      p.up[s] = ConvLayer<Scalar>::shaped(W, W, 3);  // [Cf, Ct, K, K] for transpose
      p.fuse[s] = ConvLayer<Scalar>::shaped(W, 2 * W, 3);
    }
    p.bottleneck.c1 = ConvLayer<Scalar>::shaped(W, W / g, 3);
    p.bottleneck.c2 = ConvLayer<Scalar>::shaped(W, W / g, 3);
    p.head = ConvLayer<Scalar>::shaped(1, W, 3);
    return p;
  }

  // He init everywhere except a damped head, so the predicted correction
  // starts near zero and the surrounding residual wiring starts at identity.
  static UNetParams init(Index in_channels, Index width, Index groups, const Rng& rng,
                         Scalar head_gain = Scalar(0.01)) {
    UNetParams p = zero(in_channels, width, groups);
    const Index W = width, g = groups;
    std::uint64_t sid = 0;
    auto next = [&]() { return rng.stream(sid++); };
    p.stem = ConvLayer<Scalar>::he(W, in_channels, 3, next());
    for (int s = 0; s < kStages; ++s) {
      p.enc[s].c1 = ConvLayer<Scalar>::he(W, W / g, 3, next());
      p.enc[s].c2 = ConvLayer<Scalar>::he(W, W / g, 3, next());
      p.down[s] = ConvLayer<Scalar>::he(W, W, 3, next());
      p.up[s] = ConvLayer<Scalar>::he(W, W, 3, next());
      p.fuse[s] = ConvLayer<Scalar>::he(W, 2 * W, 3, next());
    }
    p.bottleneck.c1 = ConvLayer<Scalar>::he(W, W / g, 3, next());
    p.bottleneck.c2 = ConvLayer<Scalar>::he(W, W / g, 3, next());
    p.head = ConvLayer<Scalar>::he(1, W, 3, next(), head_gain);
    return p;
  }

  template <class F>
  void for_each_layer(const std::string& prefix, F&& f) {
    f(prefix + ".stem", stem);
    for (int s = 0; s < kStages; ++s) {
      const std::string n = std::to_string(s);
      f(prefix + ".enc" + n + ".c1", enc[s].c1);
      f(prefix + ".enc" + n + ".c2", enc[s].c2);
      f(prefix + ".down" + n, down[s]);
    }
    f(prefix + ".bott.c1", bottleneck.c1);
    f(prefix + ".bott.c2", bottleneck.c2);
    for (int s = 0; s < kStages; ++s) {
      const std::string n = std::to_string(s);
      f(prefix + ".up" + n, up[s]);
      f(prefix + ".fuse" + n, fuse[s]);
    }
    f(prefix + ".head", head);
  }
};

template <class Scalar>
struct UNetTrace {
  Tensor<Scalar> stem_in, stem_mask;
  struct BlockTrace {
    Tensor<Scalar> in;        // block input (= residual source)
    Tensor<Scalar> t1_mask;   // mask of first conv's relu
    Tensor<Scalar> t1;        // activated first conv output
    Tensor<Scalar> sum_mask;  // mask of relu(in + c2(t1))
  };
  std::array<BlockTrace, UNetParams<Scalar>::kStages> enc;
  std::array<Tensor<Scalar>, UNetParams<Scalar>::kStages> down_in, down_mask;
  BlockTrace bottleneck;
  std::array<Tensor<Scalar>, UNetParams<Scalar>::kStages> up_in, up_mask;
  std::array<Tensor<Scalar>, UNetParams<Scalar>::kStages> fuse_in, fuse_mask;
  Tensor<Scalar> head_in;
};

namespace unetdet {

template <class Scalar>
Tensor<Scalar> block_forward(const typename UNetParams<Scalar>::Block& blk, Index groups,
                             const Tensor<Scalar>& x,
                             typename UNetTrace<Scalar>::BlockTrace* tr) {
  if (tr) tr->in = x;
  Tensor<Scalar> t1 = relu(conv2d(x, blk.c1.w, blk.c1.b, 1, 1, groups),
                           tr ? &tr->t1_mask : nullptr);
  if (tr) tr->t1 = t1;
  Tensor<Scalar> t2 = conv2d(t1, blk.c2.w, blk.c2.b, 1, 1, groups);
  t2.array() += x.array();
  return relu(t2, tr ? &tr->sum_mask : nullptr);
}

// Accumulates layer gradients into .grad buffers; returns input cotangent.
template <class Scalar>
Tensor<Scalar> block_backward(typename UNetParams<Scalar>::Block& blk, Index groups,
                              const typename UNetTrace<Scalar>::BlockTrace& tr,
                              const Tensor<Scalar>& cot) {
  Tensor<Scalar> g(cot.shape());
  g.array() = cot.array() * tr.sum_mask.array();
  Tensor<Scalar> dt1, dw2, db2;
  conv2d_vjp(tr.t1, blk.c2.w, 1, 1, groups, g, &dt1, &dw2, &db2);
  blk.c2.w.accumulate_grad(dw2);
  blk.c2.b.accumulate_grad(db2);
  dt1.array() *= tr.t1_mask.array();
  Tensor<Scalar> dx, dw1, db1;
  conv2d_vjp(tr.in, blk.c1.w, 1, 1, groups, dt1, &dx, &dw1, &db1);
  blk.c1.w.accumulate_grad(dw1);
  blk.c1.b.accumulate_grad(db1);
  dx.array() += g.array();  // residual path
  return dx;
}

}  // namespace unetdet

template <class Scalar>
Tensor<Scalar> unet_forward(const Tensor<Scalar>& x, const UNetParams<Scalar>& p,
                            UNetTrace<Scalar>* tr = nullptr) {
  require(x.rank() == 4 && x.dim(1) == p.in_channels,
          "unet: input shape " + shape_str(x.shape()) + " does not provide " +
              std::to_string(p.in_channels) + " channels");
  require(x.dim(2) % 16 == 0 && x.dim(2) == x.dim(3),
          "unet: spatial dims must be square and divisible by 16, got " + shape_str(x.shape()));

  if (tr) tr->stem_in = x;
  Tensor<Scalar> a = relu(conv2d(x, p.stem.w, p.stem.b, 1, 1), tr ? &tr->stem_mask : nullptr);

  std::array<Tensor<Scalar>, UNetParams<Scalar>::kStages> skips;
  for (int s = 0; s < UNetParams<Scalar>::kStages; ++s) {
    a = unetdet::block_forward<Scalar>(p.enc[s], p.groups, a, tr ? &tr->enc[s] : nullptr);
    skips[s] = a;
    if (tr) tr->down_in[s] = a;
    a = relu(conv2d(a, p.down[s].w, p.down[s].b, 2, 1), tr ? &tr->down_mask[s] : nullptr);
  }

  a = unetdet::block_forward<Scalar>(p.bottleneck, p.groups, a, tr ? &tr->bottleneck : nullptr);

  for (int s = UNetParams<Scalar>::kStages - 1; s >= 0; --s) {
    if (tr) tr->up_in[s] = a;
    a = relu(conv2d_transpose(a, p.up[s].w, p.up[s].b, 2), tr ? &tr->up_mask[s] : nullptr);
    Tensor<Scalar> cat = concat_channels(a, skips[s]);
    if (tr) tr->fuse_in[s] = cat;
    a = relu(conv2d(cat, p.fuse[s].w, p.fuse[s].b, 1, 1), tr ? &tr->fuse_mask[s] : nullptr);
  }

  if (tr) tr->head_in = a;
  return conv2d(a, p.head.w, p.head.b, 1, 1);
}

// Accumulates parameter gradients into .grad; returns cotangent w.r.t. input.
template <class Scalar>
Tensor<Scalar> unet_backward(UNetParams<Scalar>& p, const UNetTrace<Scalar>& tr,
                             const Tensor<Scalar>& cot) {
  Tensor<Scalar> g, dw, db;
  conv2d_vjp(tr.head_in, p.head.w, 1, 1, Index(1), cot, &g, &dw, &db);
  p.head.w.accumulate_grad(dw);
  p.head.b.accumulate_grad(db);

  std::array<Tensor<Scalar>, UNetParams<Scalar>::kStages> skip_cots;
  for (int s = 0; s < UNetParams<Scalar>::kStages; ++s) {
    g.array() *= tr.fuse_mask[s].array();
    Tensor<Scalar> dcat;
    conv2d_vjp(tr.fuse_in[s], p.fuse[s].w, 1, 1, Index(1), g, &dcat, &dw, &db);
    p.fuse[s].w.accumulate_grad(dw);
    p.fuse[s].b.accumulate_grad(db);
    Tensor<Scalar> dup = slice_channels(dcat, 0, p.width);
    skip_cots[s] = slice_channels(dcat, p.width, p.width);
    dup.array() *= tr.up_mask[s].array();
    conv2d_transpose_vjp(tr.up_in[s], p.up[s].w, 2, dup, &g, &dw, &db);
    p.up[s].w.accumulate_grad(dw);
    p.up[s].b.accumulate_grad(db);
  }

  g = unetdet::block_backward<Scalar>(p.bottleneck, p.groups, tr.bottleneck, g);

  for (int s = UNetParams<Scalar>::kStages - 1; s >= 0; --s) {
    g.array() *= tr.down_mask[s].array();
    Tensor<Scalar> dskip;
    conv2d_vjp(tr.down_in[s], p.down[s].w, 2, 1, Index(1), g, &dskip, &dw, &db);
    p.down[s].w.accumulate_grad(dw);
    p.down[s].b.accumulate_grad(db);
    dskip.array() += skip_cots[s].array();
    g = unetdet::block_backward<Scalar>(p.enc[s], p.groups, tr.enc[s], dskip);
  }

  g.array() *= tr.stem_mask.array();
  Tensor<Scalar> dx;
  conv2d_vjp(tr.stem_in, p.stem.w, 1, 1, Index(1), g, &dx, &dw, &db);
  p.stem.w.accumulate_grad(dw);
  p.stem.b.accumulate_grad(db);
  return dx;
}

}  // namespace dna
