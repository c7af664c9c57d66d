// Parallel-beam projection geometry.
//
// radon_forward is rotate-and-sum: rotate the image to the view angle with
// rotate_bilinear, then integrate each image row, so detector bin d reads
// image row d at view angle 0 and the detector grid coincides with the pixel
// grid (spacing 1). radon_adjoint is the exact transpose of that map: each
// sinogram value is smeared across image row d and pushed through the
// transpose rotation (rotate_bilinear_adjoint). Building the pair as literal
// transposes makes <radon_forward(x), y> == <x, radon_adjoint(y)> hold to
// float rounding, which the adjoint tests, the learned backprojection anchor
// and the sinogram-consistency gradients all rely on.
#pragma once

#include <cmath>

#include "dna/rotate.hpp"
#include "dna/tensor.hpp"

namespace dna {

struct GeometryConfig {
  Index image_size = 64;
  Index num_views = 16;
  Index num_detectors = 0;  // 0 means "same as image_size"
  double angular_span = kPi;

  Index detectors() const { return num_detectors > 0 ? num_detectors : image_size; }
  double angle(Index v) const { return angular_span * double(v) / double(num_views); }
  double view_weight() const { return angular_span / double(num_views); }

  void validate() const {
    require(image_size >= 8, "geometry: image_size must be >= 8");
    require(num_views >= 1, "geometry: num_views must be >= 1");
    require(detectors() == image_size,
            "geometry: detector count " + std::to_string(detectors()) +
                " must equal image size " + std::to_string(image_size) +
                " (detector grid coincides with pixel columns)");
    require(angular_span > 0, "geometry: angular_span must be positive");
  }
};

// Zeroes every pixel whose center lies farther than N/2 from the image
// center; idempotent. Interior values pass through with signed zeros
// normalized to +0 so that algebraically identical pipelines stay bitwise
// comparable. Works on any [..., N, N] tensor.
template <class Scalar>
Tensor<Scalar> circle_mask(const Tensor<Scalar>& img) {
  require(img.rank() >= 2, "circle_mask: need at least 2 dimensions");
  const Index N = img.dim(img.rank() - 1);
  require(img.dim(img.rank() - 2) == N,
          "circle_mask: image must be square, got " + shape_str(img.shape()));
  const double ctr = 0.5 * double(N - 1);
  const double r2 = 0.25 * double(N) * double(N);

  Tensor<Scalar> out(img.shape());
  const Index planes = img.numel() / (N * N);
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = img.data() + p * N * N;
    Scalar* dst = out.data() + p * N * N;
    for (Index r = 0; r < N; ++r) {
      const double dy = double(r) - ctr;
      for (Index c = 0; c < N; ++c) {
        const double dx = double(c) - ctr;
        dst[r * N + c] =
            (dy * dy + dx * dx > r2) ? Scalar(0) : src[r * N + c] + Scalar(0);
      }
    }
  }
  return out;
}

// sino[b,0,v,d] = sum_c rotate_bilinear(img, angle(v))[b,0,d,c]
template <class Scalar>
Tensor<Scalar> radon_forward_batch(const Tensor<Scalar>& img, const GeometryConfig& geo) {
  geo.validate();
  require(img.rank() == 4 && img.dim(1) == 1 && img.dim(2) == geo.image_size &&
              img.dim(3) == geo.image_size,
          "radon_forward: image shape " + shape_str(img.shape()) + " does not match geometry N=" +
              std::to_string(geo.image_size));
  const Index B = img.dim(0), N = geo.image_size, V = geo.num_views;

  Tensor<Scalar> sino({B, 1, V, N});
  for (Index v = 0; v < V; ++v) {
    Tensor<Scalar> rot = rotate_bilinear(img, geo.angle(v));
    for (Index b = 0; b < B; ++b) {
      auto plane = rot.plane(b, N, N);
      for (Index d = 0; d < N; ++d) sino(b, 0, v, d) = plane.row(d).sum();
    }
  }
  return sino;
}

// Exact transpose of radon_forward: smear sinogram value (v,d) across image
// row d, push the smear through the transpose rotation, sum over views.
// Unscaled pure adjoint; callers apply angular_span/num_views.
template <class Scalar>
Tensor<Scalar> radon_adjoint_batch(const Tensor<Scalar>& sino, const GeometryConfig& geo) {
  geo.validate();
  require(sino.rank() == 4 && sino.dim(1) == 1 && sino.dim(2) == geo.num_views &&
              sino.dim(3) == geo.detectors(),
          "radon_adjoint: sinogram shape " + shape_str(sino.shape()) +
              " does not match geometry (views=" + std::to_string(geo.num_views) +
              ", detectors=" + std::to_string(geo.detectors()) + ")");
  const Index B = sino.dim(0), N = geo.image_size, V = geo.num_views;

  Tensor<Scalar> out({B, 1, N, N});
  Tensor<Scalar> smear({B, 1, N, N});
  for (Index v = 0; v < V; ++v) {
    for (Index b = 0; b < B; ++b) {
      auto plane = smear.plane(b, N, N);
      for (Index d = 0; d < N; ++d) plane.row(d).setConstant(sino(b, 0, v, d));
    }
    out.array() += rotate_bilinear_adjoint(smear, geo.angle(v)).array();
  }
  return out;
}

template <class Scalar>
Tensor<Scalar> radon_forward(const Tensor<Scalar>& img, const GeometryConfig& geo) {
  require(img.rank() == 2, "radon_forward: image must be [N,N]");
  Tensor<Scalar> sino =
      radon_forward_batch(img.reshaped({1, 1, img.dim(0), img.dim(1)}), geo);
  return sino.reshaped({geo.num_views, geo.detectors()});
}

template <class Scalar>
Tensor<Scalar> radon_adjoint(const Tensor<Scalar>& sino, const GeometryConfig& geo) {
  require(sino.rank() == 2, "radon_adjoint: sinogram must be [views,detectors]");
  Tensor<Scalar> img =
      radon_adjoint_batch(sino.reshaped({1, 1, sino.dim(0), sino.dim(1)}), geo);
  return img.reshaped({geo.image_size, geo.image_size});
}

}  // namespace dna
