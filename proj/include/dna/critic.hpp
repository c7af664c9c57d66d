// Wasserstein critic: six 3x3 convolutions with filter counts
// {b, b, 2b, 2b, 4b, 4b} (paper topology at b=64), strides 1,2,1,2,1,2,
// zero padding, leaky-ReLU slope 0.2 after every layer including the first
// fully-connected head (16b neurons); the final head is a single linear
// neuron, so scores are unbounded.
//
// Besides the usual forward/backward, this header implements the second
// backward pass needed by the gradient penalty: the penalty differentiates
// the critic's *input gradient* with respect to the critic weights. For a
// piecewise-linear critic the activation masks carry zero curvature almost
// everywhere, so the exact parameter gradient is obtained by pushing a
// tangent through the mask-frozen linear chain and reversing over it.
#pragma once

#include <array>
#include <vector>

#include "dna/conv.hpp"
#include "dna/tensor.hpp"
#include "dna/unet.hpp"

namespace dna {

template <class Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar slope, Tensor<Scalar>* mask = nullptr) {
  Tensor<Scalar> m(x.shape());
  m.array() =
      (x.array() > Scalar(0)).template cast<Scalar>() * (Scalar(1) - slope) + slope;
  Tensor<Scalar> y(x.shape());
  y.array() = x.array() * m.array();
  if (mask) *mask = std::move(m);
  return y;
}

template <class Scalar>
struct CriticParams {
  static constexpr int kConvs = 6;
  static constexpr Scalar kSlope = Scalar(0.2);

  Index base = 64;
  Index image_size = 0;

  std::array<ConvLayer<Scalar>, kConvs> conv;
  Tensor<Scalar> fc1_w, fc1_b;  // [16b, flat], [16b]
  Tensor<Scalar> fc2_w, fc2_b;  // [1, 16b], [1]

  static Index channels_at(Index base, int layer) {
    const Index mult[kConvs] = {1, 1, 2, 2, 4, 4};
    return base * mult[layer];
  }
  static Index stride_at(int layer) { return layer % 2 == 0 ? 1 : 2; }

  Index flat_size() const {
    const Index n8 = image_size / 8;
    return channels_at(base, kConvs - 1) * n8 * n8;
  }

  static CriticParams zero(Index image_size, Index base) {
    require(image_size % 8 == 0, "critic: image size must be divisible by 8");
    CriticParams p;
    p.base = base;
    p.image_size = image_size;
    Index cin = 1;
    for (int l = 0; l < kConvs; ++l) {
      const Index cout = channels_at(base, l);
      p.conv[l] = ConvLayer<Scalar>::shaped(cout, cin, 3);
      cin = cout;
    }
    const Index n1 = 16 * base;
    p.fc1_w = Tensor<Scalar>({n1, p.flat_size()});
    p.fc1_b = Tensor<Scalar>({n1});
    p.fc2_w = Tensor<Scalar>({1, n1});
    p.fc2_b = Tensor<Scalar>({1});
    return p;
  }

  static CriticParams init(Index image_size, Index base, const Rng& rng) {
    CriticParams p = zero(image_size, base);
    Index cin = 1;
    for (int l = 0; l < kConvs; ++l) {
      const Index cout = channels_at(base, l);
      p.conv[l] = ConvLayer<Scalar>::he(cout, cin, 3, rng.stream(static_cast<std::uint64_t>(l)));
      cin = cout;
    }
    const Index n1 = 16 * base;
    p.fc1_w = Tensor<Scalar>::randn({n1, p.flat_size()}, rng.stream(100),
                                    std::sqrt(Scalar(2) / static_cast<Scalar>(p.flat_size())));
    p.fc2_w = Tensor<Scalar>::randn({1, n1}, rng.stream(101),
                                    std::sqrt(Scalar(2) / static_cast<Scalar>(n1)));
    return p;
  }

  template <class F>
  void for_each_layer(const std::string& prefix, F&& f) {
    for (int l = 0; l < kConvs; ++l) f(prefix + ".conv" + std::to_string(l), conv[l]);
  }
};

template <class Scalar>
struct CriticTrace {
  std::array<Tensor<Scalar>, CriticParams<Scalar>::kConvs> conv_in, conv_mask;
  Tensor<Scalar> flat;      // [B, flat]
  Tensor<Scalar> fc1_mask;  // [B, n1]
  Tensor<Scalar> fc1_out;   // [B, n1] (activated)
};

// x: [B,1,N,N] -> scores [B]
template <class Scalar>
Tensor<Scalar> critic_forward(const Tensor<Scalar>& x, const CriticParams<Scalar>& p,
                              CriticTrace<Scalar>* tr = nullptr) {
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == p.image_size && x.dim(3) == p.image_size,
          "critic: input shape " + shape_str(x.shape()) + " does not match configured size " +
              std::to_string(p.image_size));
  const Index B = x.dim(0);

  Tensor<Scalar> a = x;
  for (int l = 0; l < CriticParams<Scalar>::kConvs; ++l) {
    if (tr) tr->conv_in[l] = a;
    a = leaky_relu(conv2d(a, p.conv[l].w, p.conv[l].b, CriticParams<Scalar>::stride_at(l), 1),
                   CriticParams<Scalar>::kSlope, tr ? &tr->conv_mask[l] : nullptr);
  }

  const Index flat = p.flat_size();
  Tensor<Scalar> af = a.reshaped({B, flat});
  if (tr) tr->flat = af;

  const Index n1 = p.fc1_w.dim(0);
  Tensor<Scalar> z1({B, n1});
  {
    typename Tensor<Scalar>::ConstMatrixMap W1(p.fc1_w.data(), n1, flat);
    typename Tensor<Scalar>::ConstMatrixMap A(af.data(), B, flat);
    typename Tensor<Scalar>::MatrixMap Z(z1.data(), B, n1);
    Z.noalias() = A * W1.transpose();
    Z.rowwise() += typename Tensor<Scalar>::ConstMatrixMap(p.fc1_b.data(), 1, n1).row(0);
  }
  Tensor<Scalar> a1 = leaky_relu(z1, CriticParams<Scalar>::kSlope, tr ? &tr->fc1_mask : nullptr);
  if (tr) tr->fc1_out = a1;

  Tensor<Scalar> scores({B});
  {
    typename Tensor<Scalar>::ConstMatrixMap W2(p.fc2_w.data(), 1, n1);
    typename Tensor<Scalar>::ConstMatrixMap A1(a1.data(), B, n1);
    typename Tensor<Scalar>::MatrixMap S(scores.data(), B, 1);
    S.noalias() = A1 * W2.transpose();
    S.array() += p.fc2_b[0];
  }
  return scores;
}

// Backward from per-item score cotangents. Parameter gradients are
// accumulated into .grad buffers when accumulate_params is set; the returned
// tensor is the cotangent w.r.t. the input image batch.
template <class Scalar>
Tensor<Scalar> critic_backward(CriticParams<Scalar>& p, const CriticTrace<Scalar>& tr,
                               const Tensor<Scalar>& score_cot, bool accumulate_params) {
  const Index B = score_cot.dim(0);
  const Index n1 = p.fc1_w.dim(0), flat = p.flat_size();

  // fc2
  Tensor<Scalar> da1({B, n1});
  {
    typename Tensor<Scalar>::ConstMatrixMap W2(p.fc2_w.data(), 1, n1);
    typename Tensor<Scalar>::ConstMatrixMap C(score_cot.data(), B, 1);
    typename Tensor<Scalar>::MatrixMap D(da1.data(), B, n1);
    D.noalias() = C * W2;
    if (accumulate_params) {
      typename Tensor<Scalar>::ConstMatrixMap A1(tr.fc1_out.data(), B, n1);
      Tensor<Scalar> dw2({1, n1});
      typename Tensor<Scalar>::MatrixMap DW(dw2.data(), 1, n1);
      DW.noalias() = C.transpose() * A1;
      p.fc2_w.accumulate_grad(dw2);
      p.fc2_b.grad()[0] += score_cot.array().sum();
    }
  }
  da1.array() *= tr.fc1_mask.array();

  // fc1
  Tensor<Scalar> dflat({B, flat});
  {
    typename Tensor<Scalar>::ConstMatrixMap W1(p.fc1_w.data(), n1, flat);
    typename Tensor<Scalar>::ConstMatrixMap D1(da1.data(), B, n1);
    typename Tensor<Scalar>::MatrixMap DF(dflat.data(), B, flat);
    DF.noalias() = D1 * W1;
    if (accumulate_params) {
      typename Tensor<Scalar>::ConstMatrixMap A(tr.flat.data(), B, flat);
      Tensor<Scalar> dw1({n1, flat});
      typename Tensor<Scalar>::MatrixMap DW(dw1.data(), n1, flat);
      DW.noalias() = D1.transpose() * A;
      p.fc1_w.accumulate_grad(dw1);
      Tensor<Scalar> db1({n1});
      typename Tensor<Scalar>::MatrixMap DB(db1.data(), n1, 1);
      DB.noalias() = D1.transpose() * Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(B);
      p.fc1_b.accumulate_grad(db1);
    }
  }

  const Index n8 = p.image_size / 8;
  Tensor<Scalar> g = dflat.reshaped(
      {B, CriticParams<Scalar>::channels_at(p.base, CriticParams<Scalar>::kConvs - 1), n8, n8});

  for (int l = CriticParams<Scalar>::kConvs - 1; l >= 0; --l) {
    g.array() *= tr.conv_mask[l].array();
    Tensor<Scalar> dx, dw, db;
    conv2d_vjp(tr.conv_in[l], p.conv[l].w, CriticParams<Scalar>::stride_at(l), Index(1), Index(1),
               g, &dx, accumulate_params ? &dw : nullptr, accumulate_params ? &db : nullptr);
    if (accumulate_params) {
      p.conv[l].w.accumulate_grad(dw);
      p.conv[l].b.accumulate_grad(db);
    }
    g = std::move(dx);
  }
  return g;
}

// Input gradient with all score cotangents equal to 1: g_b = dD/dx_b.
template <class Scalar>
Tensor<Scalar> critic_input_gradient(CriticParams<Scalar>& p, const CriticTrace<Scalar>& tr,
                                     Index batch) {
  return critic_backward(p, tr, Tensor<Scalar>::full({batch}, Scalar(1)), false);
}

// Second backward for the gradient penalty. Given u = dP/dg where g is the
// critic input gradient at the traced point, pushes u forward through the
// mask-frozen linear chain and reverses over that tangent computation,
// accumulating dP/dtheta into the critic's .grad buffers. Activation masks
// are piecewise constant, so their parameter dependence contributes zero
// almost everywhere and the result matches finite differences of the penalty.
template <class Scalar>
void critic_penalty_param_grad(CriticParams<Scalar>& p, const CriticTrace<Scalar>& tr,
                               const Tensor<Scalar>& u) {
  const Index B = u.dim(0);
  const Index n1 = p.fc1_w.dim(0), flat = p.flat_size();
  constexpr int kConvs = CriticParams<Scalar>::kConvs;

  // tangent forward (no biases), saving pre-mask conv inputs
  std::array<Tensor<Scalar>, kConvs> t_in;
  Tensor<Scalar> t = u;
  for (int l = 0; l < kConvs; ++l) {
    t_in[l] = t;
    t = conv2d(t, p.conv[l].w, Tensor<Scalar>(), CriticParams<Scalar>::stride_at(l), 1);
    t.array() *= tr.conv_mask[l].array();
  }
  Tensor<Scalar> tflat = t.reshaped({B, flat});
  Tensor<Scalar> t1({B, n1});
  {
    typename Tensor<Scalar>::ConstMatrixMap W1(p.fc1_w.data(), n1, flat);
    typename Tensor<Scalar>::ConstMatrixMap T(tflat.data(), B, flat);
    typename Tensor<Scalar>::MatrixMap T1(t1.data(), B, n1);
    T1.noalias() = T * W1.transpose();
  }
  t1.array() *= tr.fc1_mask.array();
  // s_b = fc2_lin(t1_b); reverse with seed 1 per item.

  // reverse over the tangent chain
  {
    Tensor<Scalar> dw2({1, n1});
    typename Tensor<Scalar>::MatrixMap DW(dw2.data(), 1, n1);
    typename Tensor<Scalar>::ConstMatrixMap T1(t1.data(), B, n1);
    DW.noalias() = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Ones(B) * T1;
    p.fc2_w.accumulate_grad(dw2);
  }
  Tensor<Scalar> r1({B, n1});
  {
    typename Tensor<Scalar>::ConstMatrixMap W2(p.fc2_w.data(), 1, n1);
    typename Tensor<Scalar>::MatrixMap R1(r1.data(), B, n1);
    R1.noalias() = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(B) * W2;
  }
  r1.array() *= tr.fc1_mask.array();
  {
    Tensor<Scalar> dw1({n1, flat});
    typename Tensor<Scalar>::MatrixMap DW(dw1.data(), n1, flat);
    typename Tensor<Scalar>::ConstMatrixMap R1(r1.data(), B, n1);
    typename Tensor<Scalar>::ConstMatrixMap T(tflat.data(), B, flat);
    DW.noalias() = R1.transpose() * T;
    p.fc1_w.accumulate_grad(dw1);
  }
  Tensor<Scalar> rflat({B, flat});
  {
    typename Tensor<Scalar>::ConstMatrixMap W1(p.fc1_w.data(), n1, flat);
    typename Tensor<Scalar>::ConstMatrixMap R1(r1.data(), B, n1);
    typename Tensor<Scalar>::MatrixMap RF(rflat.data(), B, flat);
    RF.noalias() = R1 * W1;
  }

  const Index n8 = p.image_size / 8;
  Tensor<Scalar> r = rflat.reshaped(
      {B, CriticParams<Scalar>::channels_at(p.base, kConvs - 1), n8, n8});
  for (int l = kConvs - 1; l >= 0; --l) {
    r.array() *= tr.conv_mask[l].array();
    Tensor<Scalar> dr, dw;
    conv2d_vjp(t_in[l], p.conv[l].w, CriticParams<Scalar>::stride_at(l), Index(1), Index(1), r,
               &dr, &dw, static_cast<Tensor<Scalar>*>(nullptr));
    p.conv[l].w.accumulate_grad(dw);
    r = std::move(dr);
  }
}

}  // namespace dna
