// Learned point-wise backprojection and the analytic FBP baseline.
//
// Each branch c and view v owns a weight and bias vector of image width: the
// smear for view v places filtered[v,d] * weights[c,v,:] + biases[c,v,:] on
// image row d, the smear is carried to the view angle by the same transpose
// rotation radon_adjoint uses, rotated smears are summed over views, branches
// are averaged, and the result is scaled by angular_span / num_views.
//
// Because the smear is linear in the per-branch parameters, averaging the C
// branch images equals running a single pass with branch-averaged weights;
// the forward pass computes it that way (one rotation per view instead of C)
// and the VJP hands every branch 1/C of the shared parameter cotangent. With
// unit weights and zero biases the smear degenerates to radon_adjoint's own
// smear, so identity parameters reduce the layer to the plain scaled adjoint
// bit for bit.
#pragma once

#include "dna/filtration.hpp"
#include "dna/geometry.hpp"
#include "dna/rotate.hpp"
#include "dna/tensor.hpp"

namespace dna {

inline long long bp_param_count(long long branches, long long image_size, long long num_views) {
  require(branches > 0 && image_size > 0 && num_views > 0,
          "bp_param_count: arguments must be positive");
  return 2 * branches * image_size * num_views;
}

template <class Scalar>
struct PointwiseBPParams {
  Tensor<Scalar> weights;  // [C, V, N]
  Tensor<Scalar> biases;   // [C, V, N]

  Index branches() const { return weights.dim(0); }

  long long param_count() const { return weights.numel() + biases.numel(); }

  static PointwiseBPParams identity(Index branches, Index num_views, Index image_size) {
    PointwiseBPParams p;
    p.weights = Tensor<Scalar>::full({branches, num_views, image_size}, Scalar(1));
    p.biases = Tensor<Scalar>({branches, num_views, image_size});
    return p;
  }

  // Unit weights with small noise: training starts at analytic backprojection.
  static PointwiseBPParams init(Index branches, Index num_views, Index image_size, const Rng& rng,
                                Scalar sigma = Scalar(0.01)) {
    PointwiseBPParams p = identity(branches, num_views, image_size);
    p.weights.array() +=
        Tensor<Scalar>::randn(p.weights.shape(), rng.stream(1), sigma).array();
    return p;
  }

  void validate(const GeometryConfig& geo) const {
    require(weights.rank() == 3 && weights.dim(1) == geo.num_views &&
                weights.dim(2) == geo.image_size,
            "pointwise bp: weights shape " + shape_str(weights.shape()) +
                " does not match geometry (views=" + std::to_string(geo.num_views) +
                ", N=" + std::to_string(geo.image_size) + ")");
    require(weights.same_shape(biases), "pointwise bp: weights/biases shape mismatch");
  }
};

namespace bpdet {

// Branch means; with all-unit weights the mean is exactly 1.
template <class Scalar>
void branch_means(const PointwiseBPParams<Scalar>& params, Tensor<Scalar>& wbar,
                  Tensor<Scalar>& bbar) {
  const Index C = params.weights.dim(0), V = params.weights.dim(1), N = params.weights.dim(2);
  wbar = Tensor<Scalar>({V, N});
  bbar = Tensor<Scalar>({V, N});
  for (Index c = 0; c < C; ++c) {
    wbar.array() += params.weights.chunk(c * V * N, V * N);
    bbar.array() += params.biases.chunk(c * V * N, V * N);
  }
  wbar.array() /= static_cast<Scalar>(C);
  bbar.array() /= static_cast<Scalar>(C);
}

}  // namespace bpdet

// filtered: [B,1,V,N] -> image batch [B,1,N,N]
template <class Scalar>
Tensor<Scalar> pointwise_backproject_batch(const Tensor<Scalar>& filtered,
                                           const PointwiseBPParams<Scalar>& params,
                                           const GeometryConfig& geo) {
  geo.validate();
  params.validate(geo);
  require(filtered.rank() == 4 && filtered.dim(1) == 1 && filtered.dim(2) == geo.num_views &&
              filtered.dim(3) == geo.image_size,
          "pointwise_backproject: input shape " + shape_str(filtered.shape()) +
              " does not match geometry");
  const Index B = filtered.dim(0), V = geo.num_views, N = geo.image_size;

  Tensor<Scalar> wbar, bbar;
  bpdet::branch_means(params, wbar, bbar);

  Tensor<Scalar> acc({B, 1, N, N});
  Tensor<Scalar> smear({B, 1, N, N});
  for (Index v = 0; v < V; ++v) {
    typename Tensor<Scalar>::ConstMatrixMap wrow(wbar.data() + v * N, 1, N);
    typename Tensor<Scalar>::ConstMatrixMap brow(bbar.data() + v * N, 1, N);
    for (Index b = 0; b < B; ++b) {
      typename Tensor<Scalar>::ConstMatrixMap fcol(filtered.data() + (b * V + v) * N, N, 1);
      auto plane = smear.plane(b, N, N);
      plane.noalias() = fcol * wrow;
      plane.rowwise() += brow.row(0);
    }
    acc.array() += rotate_bilinear_adjoint(smear, geo.angle(v)).array();
  }
  acc.array() *= static_cast<Scalar>(geo.view_weight());
  return acc;
}

// Cotangents of <cot, pointwise_backproject(filtered, params)>; null skips.
template <class Scalar>
void pointwise_backproject_vjp(const Tensor<Scalar>& filtered,
                               const PointwiseBPParams<Scalar>& params, const GeometryConfig& geo,
                               const Tensor<Scalar>& cot, Tensor<Scalar>* dfiltered,
                               Tensor<Scalar>* dweights, Tensor<Scalar>* dbiases) {
  const Index B = filtered.dim(0), V = geo.num_views, N = geo.image_size;
  const Index C = params.weights.dim(0);
  require(cot.rank() == 4 && cot.dim(0) == B && cot.dim(2) == N && cot.dim(3) == N,
          "pointwise_backproject_vjp: cotangent shape mismatch");
  const Scalar vw = static_cast<Scalar>(geo.view_weight());

  Tensor<Scalar> wbar, bbar;
  bpdet::branch_means(params, wbar, bbar);

  if (dfiltered) *dfiltered = Tensor<Scalar>({B, 1, V, N});
  Tensor<Scalar> dwbar({V, N}), dbbar({V, N});

  for (Index v = 0; v < V; ++v) {
    Tensor<Scalar> carried = rotate_bilinear(cot, geo.angle(v));  // transpose of the smear rotation
    typename Tensor<Scalar>::ConstMatrixMap wrow(wbar.data() + v * N, N, 1);
    typename Tensor<Scalar>::MatrixMap dwrow(dwbar.data() + v * N, 1, N);
    typename Tensor<Scalar>::MatrixMap dbrow(dbbar.data() + v * N, 1, N);
    for (Index b = 0; b < B; ++b) {
      auto sp = carried.plane(b, N, N);
      if (dfiltered) {
        typename Tensor<Scalar>::MatrixMap df(dfiltered->data() + (b * V + v) * N, N, 1);
        df.noalias() += sp * wrow;
      }
      if (dweights) {
        typename Tensor<Scalar>::ConstMatrixMap fcol(filtered.data() + (b * V + v) * N, 1, N);
        dwrow.noalias() += fcol * sp;
      }
      if (dbiases) dbrow += sp.colwise().sum();
    }
  }

  if (dfiltered) dfiltered->array() *= vw;
  if (dweights) {
    *dweights = Tensor<Scalar>({C, V, N});
    dwbar.array() *= vw / static_cast<Scalar>(C);
    for (Index c = 0; c < C; ++c) dweights->chunk(c * V * N, V * N) = dwbar.array();
  }
  if (dbiases) {
    *dbiases = Tensor<Scalar>({C, V, N});
    dbbar.array() *= vw / static_cast<Scalar>(C);
    for (Index c = 0; c < C; ++c) dbiases->chunk(c * V * N, V * N) = dbbar.array();
  }
}

// Analytic baseline: mask(adjoint(ramp(sino)) * angular_span/num_views).
template <class Scalar>
Tensor<Scalar> fbp_reconstruct_batch(const Tensor<Scalar>& sino, const GeometryConfig& geo) {
  Tensor<Scalar> img = radon_adjoint_batch(ramp_filter(sino), geo);
  img.array() *= static_cast<Scalar>(geo.view_weight());
  return circle_mask(img);
}

template <class Scalar>
Tensor<Scalar> fbp_reconstruct(const Tensor<Scalar>& sino, const GeometryConfig& geo) {
  require(sino.rank() == 2, "fbp_reconstruct: sinogram must be [views,detectors]");
  Tensor<Scalar> img =
      fbp_reconstruct_batch(sino.reshaped({1, 1, sino.dim(0), sino.dim(1)}), geo);
  return img.reshaped({geo.image_size, geo.image_size});
}

}  // namespace dna
