// Discrete Fourier transform, plain sum convention:
//
//   X[k] = sum_n x[n] exp(-2*pi*i*k*n/L),   x[n] = (1/L) sum_k X[k] exp(+2*pi*i*k*n/L)
//
// Power-of-two lengths run through an iterative radix-2 transform; other
// lengths use the Bluestein chirp, which zero-pads to the next power of two
// internally but still returns the exact length-L spectrum. Under this
// convention Parseval reads ||x||^2 == (1/L)*||X||^2.
#pragma once

#include <complex>

#include "dna/tensor.hpp"

namespace dna {

template <class Scalar>
using ComplexVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

inline Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline bool is_pow2(Index n) { return n >= 1 && (n & (n - 1)) == 0; }

namespace dftdet {

// In-place radix-2 Cooley-Tukey; size must be a power of two. No scaling.
template <class Scalar>
void fft_pow2(ComplexVec<Scalar>& a, bool inverse) {
  const Index n = a.size();
  for (Index i = 1, j = 0; i < n; ++i) {
    Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (Index len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.141592653589793238462643383279 / double(len);
    const std::complex<Scalar> wlen(static_cast<Scalar>(std::cos(ang)),
                                    static_cast<Scalar>(std::sin(ang)));
    for (Index i = 0; i < n; i += len) {
      std::complex<Scalar> w(1);
      for (Index j = 0; j < len / 2; ++j) {
        const std::complex<Scalar> u = a[i + j];
        const std::complex<Scalar> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Chirp factor exp(sign * i * pi * n^2 / L), phase reduced in double.
template <class Scalar>
std::complex<Scalar> chirp(Index n, Index L, double sign) {
  const double phase = sign * 3.141592653589793238462643383279 *
                       double((n * n) % (2 * L)) / double(L);
  return {static_cast<Scalar>(std::cos(phase)), static_cast<Scalar>(std::sin(phase))};
}

}  // namespace dftdet

template <class Scalar>
ComplexVec<Scalar> dft_1d(const ComplexVec<Scalar>& x) {
  const Index L = x.size();
  require(L >= 1, "dft_1d: empty input");
  if (is_pow2(L)) {
    ComplexVec<Scalar> a = x;
    dftdet::fft_pow2(a, false);
    return a;
  }
  // Bluestein: X[k] = c[k] * conv(x.*c, conj-chirp)[k] with c[n] = e^{-i pi n^2 / L}.
  const Index M = next_pow2(2 * L - 1);
  ComplexVec<Scalar> a = ComplexVec<Scalar>::Zero(M);
  ComplexVec<Scalar> b = ComplexVec<Scalar>::Zero(M);
  for (Index n = 0; n < L; ++n) {
    const auto c = dftdet::chirp<Scalar>(n, L, -1.0);
    a[n] = x[n] * c;
    b[n] = std::conj(c);
    if (n > 0) b[M - n] = std::conj(c);
  }
  dftdet::fft_pow2(a, false);
  dftdet::fft_pow2(b, false);
  for (Index i = 0; i < M; ++i) a[i] *= b[i];
  dftdet::fft_pow2(a, true);
  ComplexVec<Scalar> out(L);
  const Scalar invM = Scalar(1) / static_cast<Scalar>(M);
  for (Index k = 0; k < L; ++k) out[k] = a[k] * invM * dftdet::chirp<Scalar>(k, L, -1.0);
  return out;
}

template <class Scalar>
ComplexVec<Scalar> idft_1d(const ComplexVec<Scalar>& X) {
  const Index L = X.size();
  require(L >= 1, "idft_1d: empty input");
  ComplexVec<Scalar> conj_in(L);
  for (Index i = 0; i < L; ++i) conj_in[i] = std::conj(X[i]);
  ComplexVec<Scalar> y = dft_1d(conj_in);
  const Scalar invL = Scalar(1) / static_cast<Scalar>(L);
  for (Index i = 0; i < L; ++i) y[i] = std::conj(y[i]) * invL;
  return y;
}

}  // namespace dna
