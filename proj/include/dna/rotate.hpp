// Bilinear image rotation about the exact grid center (N-1)/2 and its exact
// transpose.
//
// rotate_bilinear resamples: the output pixel at (r,c) reads the input at the
// inverse-rotated location, combining the four surrounding grid values with
// bilinear weights; samples outside the grid read as zero. A positive theta
// turns image content from the +row axis toward the +column axis.
//
// rotate_bilinear_adjoint is the transpose of that linear map (each output
// pixel's weights scattered back onto its source neighbourhood). It is both
// the VJP of the forward op and the backprojection rotation used by the
// reconstruction operators, where the adjoint pairing must hold to float
// rounding rather than to interpolation accuracy.
#pragma once

#include <cmath>

#include "dna/tensor.hpp"

namespace dna {

namespace rotdet {

struct Tap {
  Index r0, c0;
  double fr, fc;  // fractional offsets toward r0+1 / c0+1
  bool inside;
};

inline Tap source_tap(Index r, Index c, double cs, double sn, double ctr, Index n) {
  const double y = static_cast<double>(r) - ctr;
  const double x = static_cast<double>(c) - ctr;
  // inverse rotation of the output coordinate
  const double sy = cs * y - sn * x + ctr;
  const double sx = sn * y + cs * x + ctr;
  Tap t;
  const double fr0 = std::floor(sy), fc0 = std::floor(sx);
  t.r0 = static_cast<Index>(fr0);
  t.c0 = static_cast<Index>(fc0);
  t.fr = sy - fr0;
  t.fc = sx - fc0;
  t.inside = sy > -1.0 && sy < static_cast<double>(n) && sx > -1.0 && sx < static_cast<double>(n);
  return t;
}

}  // namespace rotdet

template <class Scalar>
Tensor<Scalar> rotate_bilinear(const Tensor<Scalar>& img, double theta) {
  require(img.rank() == 4 && img.dim(2) == img.dim(3),
          "rotate_bilinear: input must be [B,C,N,N], got " + shape_str(img.shape()));
  const Index B = img.dim(0), C = img.dim(1), N = img.dim(2);
  const double ctr = 0.5 * static_cast<double>(N - 1);
  const double cs = std::cos(theta), sn = std::sin(theta);

  Tensor<Scalar> out({B, C, N, N});
#pragma omp parallel for schedule(static)
  for (Index plane = 0; plane < B * C; ++plane) {
    const Scalar* src = img.data() + plane * N * N;
    Scalar* dst = out.data() + plane * N * N;
    for (Index r = 0; r < N; ++r)
      for (Index c = 0; c < N; ++c) {
        const auto t = rotdet::source_tap(r, c, cs, sn, ctr, N);
        Scalar v(0);
        if (t.inside) {
          const Scalar w00 = static_cast<Scalar>((1.0 - t.fr) * (1.0 - t.fc));
          const Scalar w01 = static_cast<Scalar>((1.0 - t.fr) * t.fc);
          const Scalar w10 = static_cast<Scalar>(t.fr * (1.0 - t.fc));
          const Scalar w11 = static_cast<Scalar>(t.fr * t.fc);
          const bool r0ok = t.r0 >= 0 && t.r0 < N, r1ok = t.r0 + 1 >= 0 && t.r0 + 1 < N;
          const bool c0ok = t.c0 >= 0 && t.c0 < N, c1ok = t.c0 + 1 >= 0 && t.c0 + 1 < N;
          if (r0ok && c0ok) v += w00 * src[t.r0 * N + t.c0];
          if (r0ok && c1ok) v += w01 * src[t.r0 * N + t.c0 + 1];
          if (r1ok && c0ok) v += w10 * src[(t.r0 + 1) * N + t.c0];
          if (r1ok && c1ok) v += w11 * src[(t.r0 + 1) * N + t.c0 + 1];
        }
        dst[r * N + c] = v;
      }
  }
  return out;
}

// Exact transpose: scatters each cotangent pixel onto the four grid points
// its forward sample read from.
template <class Scalar>
Tensor<Scalar> rotate_bilinear_adjoint(const Tensor<Scalar>& cot, double theta) {
  require(cot.rank() == 4 && cot.dim(2) == cot.dim(3),
          "rotate_bilinear_adjoint: input must be [B,C,N,N], got " + shape_str(cot.shape()));
  const Index B = cot.dim(0), C = cot.dim(1), N = cot.dim(2);
  const double ctr = 0.5 * static_cast<double>(N - 1);
  const double cs = std::cos(theta), sn = std::sin(theta);

  Tensor<Scalar> out({B, C, N, N});
#pragma omp parallel for schedule(static)
  for (Index plane = 0; plane < B * C; ++plane) {
    const Scalar* src = cot.data() + plane * N * N;
    Scalar* dst = out.data() + plane * N * N;
    for (Index r = 0; r < N; ++r)
      for (Index c = 0; c < N; ++c) {
        const Scalar v = src[r * N + c];
        const auto t = rotdet::source_tap(r, c, cs, sn, ctr, N);
        if (!t.inside) continue;
        const Scalar w00 = static_cast<Scalar>((1.0 - t.fr) * (1.0 - t.fc));
        const Scalar w01 = static_cast<Scalar>((1.0 - t.fr) * t.fc);
        const Scalar w10 = static_cast<Scalar>(t.fr * (1.0 - t.fc));
        const Scalar w11 = static_cast<Scalar>(t.fr * t.fc);
        const bool r0ok = t.r0 >= 0 && t.r0 < N, r1ok = t.r0 + 1 >= 0 && t.r0 + 1 < N;
        const bool c0ok = t.c0 >= 0 && t.c0 < N, c1ok = t.c0 + 1 >= 0 && t.c0 + 1 < N;
        if (r0ok && c0ok) dst[t.r0 * N + t.c0] += w00 * v;
        if (r0ok && c1ok) dst[t.r0 * N + t.c0 + 1] += w01 * v;
        if (r1ok && c0ok) dst[(t.r0 + 1) * N + t.c0] += w10 * v;
        if (r1ok && c1ok) dst[(t.r0 + 1) * N + t.c0 + 1] += w11 * v;
      }
  }
  return out;
}

}  // namespace dna
