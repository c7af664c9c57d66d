// Cross-correlation primitives (1-D, 2-D, transposed 2-D) and their exact
// vector-Jacobian products.
//
// Conventions:
//   conv1d:  x[B,Cin,L]   w[Cout,Cin,K]        y[B,Cout,Lout]
//   conv2d:  x[B,Cin,H,W] w[Cout,Cin/g,K,K]    y[B,Cout,Ho,Wo]
//   conv2d_transpose: x[B,Cf,H,W] w[Cf,Ct,K,K] y[B,Ct,s*H,s*W]
//
// y[o] = b + sum_k x[s*o + k - pad] * w[k]  (per channel pair), so the
// transposed op with a shared kernel is the exact adjoint of the strided
// conv: <conv2d(x,w), y> == <x, conv2d_transpose(y,w)> with zero bias.
// conv2d_transpose requires odd K and uses pad=(K-1)/2 with an implicit
// output padding of s-1, which makes the output exactly s times the input.
//
// A bias tensor with numel()==0 means "no bias term".
#pragma once

#include "dna/tensor.hpp"

namespace dna {

namespace convdet {

// Range of output indices o with 0 <= s*o + off <= limit-1.
inline void out_range(Index s, Index off, Index limit, Index out_len, Index& lo, Index& hi) {
  // ceil(-off/s) and floor((limit-1-off)/s), clamped to [0, out_len)
  Index lo_num = -off;
  lo = lo_num <= 0 ? 0 : (lo_num + s - 1) / s;
  Index hi_num = limit - 1 - off;
  hi = hi_num < 0 ? -1 : hi_num / s;
  if (hi > out_len - 1) hi = out_len - 1;
}

template <class Scalar>
using StridedMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>, 0,
                              Eigen::InnerStride<Eigen::Dynamic>>;
template <class Scalar>
using MutStridedMap =
    Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>, 0, Eigen::InnerStride<Eigen::Dynamic>>;

}  // namespace convdet

inline Index conv_out_len(Index in, Index k, Index stride, Index pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Index stride = 1, Index pad = 0) {
  require(x.rank() == 3, "conv1d: input must be [B,Cin,L], got " + shape_str(x.shape()));
  require(w.rank() == 3, "conv1d: kernel must be [Cout,Cin,K], got " + shape_str(w.shape()));
  require(stride >= 1, "conv1d: stride must be >= 1");
  const Index B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const Index Cout = w.dim(0), K = w.dim(2);
  require(w.dim(1) == Cin, "conv1d: kernel expects " + std::to_string(w.dim(1)) +
                               " input channels, input has " + std::to_string(Cin));
  require(K <= L + 2 * pad, "conv1d: kernel length " + std::to_string(K) +
                                " exceeds padded input " + std::to_string(L + 2 * pad));
  require(b.numel() == 0 || b.numel() == Cout, "conv1d: bias size " + std::to_string(b.numel()) +
                                                   " does not match Cout " + std::to_string(Cout));
  const Index Lout = conv_out_len(L, K, stride, pad);

  Tensor<Scalar> y({B, Cout, Lout});
  for (Index bi = 0; bi < B; ++bi) {
    for (Index co = 0; co < Cout; ++co) {
      auto yrow = y.chunk((bi * Cout + co) * Lout, Lout);
      if (b.numel() > 0) yrow.setConstant(b[co]);
      for (Index ci = 0; ci < Cin; ++ci) {
        const Scalar* xrow = x.data() + (bi * Cin + ci) * L;
        for (Index k = 0; k < K; ++k) {
          const Scalar wk = w(co, ci, k);
          if (wk == Scalar(0)) continue;
          Index lo, hi;
          convdet::out_range(stride, k - pad, L, Lout, lo, hi);
          if (hi < lo) continue;
          const Index n = hi - lo + 1;
          convdet::StridedMap<Scalar> xs(xrow + stride * lo + k - pad, n,
                                         Eigen::InnerStride<>(stride));
          yrow.segment(lo, n) += wk * xs;
        }
      }
    }
  }
  return y;
}

// Gradients of <cot, conv1d(x,w,b)>; any of dx/dw/db may be null to skip.
template <class Scalar>
void conv1d_vjp(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index stride, Index pad,
                const Tensor<Scalar>& cot, Tensor<Scalar>* dx, Tensor<Scalar>* dw,
                Tensor<Scalar>* db) {
  const Index B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const Index Cout = w.dim(0), K = w.dim(2);
  const Index Lout = conv_out_len(L, K, stride, pad);
  require(cot.rank() == 3 && cot.dim(0) == B && cot.dim(1) == Cout && cot.dim(2) == Lout,
          "conv1d_vjp: cotangent shape " + shape_str(cot.shape()) + " does not match output");

  if (dx) {
    *dx = Tensor<Scalar>({B, Cin, L});
    for (Index bi = 0; bi < B; ++bi)
      for (Index ci = 0; ci < Cin; ++ci) {
        Scalar* dxrow = dx->data() + (bi * Cin + ci) * L;
        for (Index co = 0; co < Cout; ++co) {
          const Scalar* crow = cot.data() + (bi * Cout + co) * Lout;
          for (Index k = 0; k < K; ++k) {
            const Scalar wk = w(co, ci, k);
            if (wk == Scalar(0)) continue;
            Index lo, hi;
            convdet::out_range(stride, k - pad, L, Lout, lo, hi);
            if (hi < lo) continue;
            const Index n = hi - lo + 1;
            convdet::MutStridedMap<Scalar> dxs(dxrow + stride * lo + k - pad, n,
                                               Eigen::InnerStride<>(stride));
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> cs(crow + lo, n);
            dxs += wk * cs;
          }
        }
      }
  }
  if (dw) {
    *dw = Tensor<Scalar>({Cout, Cin, K});
    for (Index co = 0; co < Cout; ++co)
      for (Index ci = 0; ci < Cin; ++ci)
        for (Index k = 0; k < K; ++k) {
          Scalar acc(0);
          for (Index bi = 0; bi < B; ++bi) {
            const Scalar* xrow = x.data() + (bi * Cin + ci) * L;
            const Scalar* crow = cot.data() + (bi * Cout + co) * Lout;
            Index lo, hi;
            convdet::out_range(stride, k - pad, L, Lout, lo, hi);
            if (hi < lo) continue;
            const Index n = hi - lo + 1;
            convdet::StridedMap<Scalar> xs(xrow + stride * lo + k - pad, n,
                                           Eigen::InnerStride<>(stride));
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> cs(crow + lo, n);
            acc += (xs * cs).sum();
          }
          (*dw)(co, ci, k) = acc;
        }
  }
  if (db) {
    *db = Tensor<Scalar>({Cout});
    for (Index co = 0; co < Cout; ++co) {
      Scalar acc(0);
      for (Index bi = 0; bi < B; ++bi)
        acc += cot.chunk((bi * Cout + co) * Lout, Lout).sum();
      (*db)[co] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d (grouped)
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Index stride = 1, Index pad = 0, Index groups = 1) {
  require(x.rank() == 4, "conv2d: input must be [B,Cin,H,W], got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d: kernel must be [Cout,Cin/g,K,K], got " + shape_str(w.shape()));
  const Index B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Cout = w.dim(0), Cg = w.dim(1), K = w.dim(2);
  require(w.dim(3) == K, "conv2d: kernel must be square");
  require(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
          "conv2d: channels not divisible by groups");
  require(Cg == Cin / groups, "conv2d: kernel has " + std::to_string(Cg) +
                                  " channels per group, expected " + std::to_string(Cin / groups));
  require(K <= H + 2 * pad && K <= W + 2 * pad, "conv2d: kernel larger than padded input");
  require(b.numel() == 0 || b.numel() == Cout, "conv2d: bias size mismatch");
  const Index Ho = conv_out_len(H, K, stride, pad);
  const Index Wo = conv_out_len(W, K, stride, pad);
  const Index co_per_g = Cout / groups;

  Tensor<Scalar> y({B, Cout, Ho, Wo});
#pragma omp parallel for schedule(static)
  for (Index plane = 0; plane < B * Cout; ++plane) {
    const Index bi = plane / Cout, co = plane % Cout;
    const Index ci0 = (co / co_per_g) * Cg;
    auto yp = y.plane(plane, Ho, Wo);
    if (b.numel() > 0) yp.setConstant(b[co]);
    Index clo, chi;
    for (Index cg = 0; cg < Cg; ++cg) {
      const Scalar* xp = x.data() + ((bi * Cin + ci0 + cg) * H) * W;
      for (Index ki = 0; ki < K; ++ki) {
        Index rlo, rhi;
        convdet::out_range(stride, ki - pad, H, Ho, rlo, rhi);
        for (Index kj = 0; kj < K; ++kj) {
          const Scalar wk = w(co, cg, ki, kj);
          if (wk == Scalar(0)) continue;
          convdet::out_range(stride, kj - pad, W, Wo, clo, chi);
          if (chi < clo) continue;
          const Index n = chi - clo + 1;
          for (Index r = rlo; r <= rhi; ++r) {
            const Scalar* xrow = xp + (stride * r + ki - pad) * W;
            convdet::StridedMap<Scalar> xs(xrow + stride * clo + kj - pad, n,
                                           Eigen::InnerStride<>(stride));
            Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(yp.row(r).data() + clo, n) +=
                wk * xs;
          }
        }
      }
    }
  }
  return y;
}

template <class Scalar>
void conv2d_vjp(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index stride, Index pad,
                Index groups, const Tensor<Scalar>& cot, Tensor<Scalar>* dx, Tensor<Scalar>* dw,
                Tensor<Scalar>* db) {
  const Index B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Cout = w.dim(0), Cg = w.dim(1), K = w.dim(2);
  const Index Ho = conv_out_len(H, K, stride, pad);
  const Index Wo = conv_out_len(W, K, stride, pad);
  require(cot.rank() == 4 && cot.dim(0) == B && cot.dim(1) == Cout && cot.dim(2) == Ho &&
              cot.dim(3) == Wo,
          "conv2d_vjp: cotangent shape " + shape_str(cot.shape()) + " does not match output");
  const Index co_per_g = Cout / groups;

  if (dx) {
    *dx = Tensor<Scalar>({B, Cin, H, W});
#pragma omp parallel for schedule(static)
    for (Index plane = 0; plane < B * Cin; ++plane) {
      const Index bi = plane / Cin, ci = plane % Cin;
      const Index g = ci / Cg, cg = ci % Cg;
      Scalar* dxp = dx->data() + plane * H * W;
      for (Index cop = 0; cop < co_per_g; ++cop) {
        const Index co = g * co_per_g + cop;
        const Scalar* cp = cot.data() + ((bi * Cout + co) * Ho) * Wo;
        for (Index ki = 0; ki < K; ++ki) {
          Index rlo, rhi;
          convdet::out_range(stride, ki - pad, H, Ho, rlo, rhi);
          for (Index kj = 0; kj < K; ++kj) {
            const Scalar wk = w(co, cg, ki, kj);
            if (wk == Scalar(0)) continue;
            Index clo, chi;
            convdet::out_range(stride, kj - pad, W, Wo, clo, chi);
            if (chi < clo) continue;
            const Index n = chi - clo + 1;
            for (Index r = rlo; r <= rhi; ++r) {
              Scalar* dxrow = dxp + (stride * r + ki - pad) * W;
              convdet::MutStridedMap<Scalar> dxs(dxrow + stride * clo + kj - pad, n,
                                                 Eigen::InnerStride<>(stride));
              Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> cs(cp + r * Wo + clo, n);
              dxs += wk * cs;
            }
          }
        }
      }
    }
  }
  if (dw) {
    *dw = Tensor<Scalar>({Cout, Cg, K, K});
#pragma omp parallel for schedule(static)
    for (Index co = 0; co < Cout; ++co) {
      const Index ci0 = (co / co_per_g) * Cg;
      for (Index cg = 0; cg < Cg; ++cg)
        for (Index ki = 0; ki < K; ++ki) {
          Index rlo, rhi;
          convdet::out_range(stride, ki - pad, H, Ho, rlo, rhi);
          for (Index kj = 0; kj < K; ++kj) {
            Index clo, chi;
            convdet::out_range(stride, kj - pad, W, Wo, clo, chi);
            Scalar acc(0);
            if (chi >= clo && rhi >= rlo) {
              const Index n = chi - clo + 1;
              for (Index bi = 0; bi < B; ++bi) {
                const Scalar* xp = x.data() + ((bi * Cin + ci0 + cg) * H) * W;
                const Scalar* cp = cot.data() + ((bi * Cout + co) * Ho) * Wo;
                for (Index r = rlo; r <= rhi; ++r) {
                  convdet::StridedMap<Scalar> xs(
                      xp + (stride * r + ki - pad) * W + stride * clo + kj - pad, n,
                      Eigen::InnerStride<>(stride));
                  Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> cs(cp + r * Wo + clo,
                                                                               n);
                  acc += (xs * cs).sum();
                }
              }
            }
            (*dw)(co, cg, ki, kj) = acc;
          }
        }
    }
  }
  if (db) {
    *db = Tensor<Scalar>({Cout});
    for (Index co = 0; co < Cout; ++co) {
      Scalar acc(0);
      for (Index bi = 0; bi < B; ++bi)
        acc += cot.chunk(((bi * Cout + co) * Ho) * Wo, Ho * Wo).sum();
      (*db)[co] = acc;
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d_transpose (stride-s upsampling; output is exactly s times the input)
// ---------------------------------------------------------------------------

template <class Scalar>
Tensor<Scalar> conv2d_transpose(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& b, Index stride = 2) {
  require(x.rank() == 4, "conv2d_transpose: input must be [B,Cf,H,W]");
  require(w.rank() == 4 && w.dim(2) == w.dim(3), "conv2d_transpose: kernel must be [Cf,Ct,K,K]");
  const Index B = x.dim(0), Cf = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Ct = w.dim(1), K = w.dim(2);
  require(w.dim(0) == Cf, "conv2d_transpose: kernel expects " + std::to_string(w.dim(0)) +
                              " input channels, input has " + std::to_string(Cf));
  require(K % 2 == 1, "conv2d_transpose: kernel size must be odd");
  require(b.numel() == 0 || b.numel() == Ct, "conv2d_transpose: bias size mismatch");
  const Index pad = (K - 1) / 2;
  const Index Ho = stride * H, Wo = stride * W;

  Tensor<Scalar> y({B, Ct, Ho, Wo});
#pragma omp parallel for schedule(static)
  for (Index plane = 0; plane < B * Ct; ++plane) {
    const Index bi = plane / Ct, ct = plane % Ct;
    auto yp = y.plane(plane, Ho, Wo);
    if (b.numel() > 0) yp.setConstant(b[ct]);
    for (Index cf = 0; cf < Cf; ++cf) {
      const Scalar* xp = x.data() + ((bi * Cf + cf) * H) * W;
      for (Index ki = 0; ki < K; ++ki) {
        Index ilo, ihi;
        convdet::out_range(stride, ki - pad, Ho, H, ilo, ihi);
        for (Index kj = 0; kj < K; ++kj) {
          const Scalar wk = w(cf, ct, ki, kj);
          if (wk == Scalar(0)) continue;
          Index jlo, jhi;
          convdet::out_range(stride, kj - pad, Wo, W, jlo, jhi);
          if (jhi < jlo) continue;
          const Index n = jhi - jlo + 1;
          for (Index i = ilo; i <= ihi; ++i) {
            Scalar* yrow = yp.row(stride * i + ki - pad).data();
            convdet::MutStridedMap<Scalar> ys(yrow + stride * jlo + kj - pad, n,
                                              Eigen::InnerStride<>(stride));
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xs(xp + i * W + jlo, n);
            ys += wk * xs;
          }
        }
      }
    }
  }
  return y;
}

template <class Scalar>
void conv2d_transpose_vjp(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index stride,
                          const Tensor<Scalar>& cot, Tensor<Scalar>* dx, Tensor<Scalar>* dw,
                          Tensor<Scalar>* db) {
  const Index B = x.dim(0), Cf = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index Ct = w.dim(1), K = w.dim(2);
  const Index pad = (K - 1) / 2;
  const Index Ho = stride * H, Wo = stride * W;
  require(cot.rank() == 4 && cot.dim(0) == B && cot.dim(1) == Ct && cot.dim(2) == Ho &&
              cot.dim(3) == Wo,
          "conv2d_transpose_vjp: cotangent shape mismatch");

  if (dx) {
    // dx is the strided conv of cot with the same kernel.
    *dx = Tensor<Scalar>({B, Cf, H, W});
#pragma omp parallel for schedule(static)
    for (Index plane = 0; plane < B * Cf; ++plane) {
      const Index bi = plane / Cf, cf = plane % Cf;
      Scalar* dxp = dx->data() + plane * H * W;
      for (Index ct = 0; ct < Ct; ++ct) {
        const Scalar* cp = cot.data() + ((bi * Ct + ct) * Ho) * Wo;
        for (Index ki = 0; ki < K; ++ki) {
          Index ilo, ihi;
          convdet::out_range(stride, ki - pad, Ho, H, ilo, ihi);
          for (Index kj = 0; kj < K; ++kj) {
            const Scalar wk = w(cf, ct, ki, kj);
            if (wk == Scalar(0)) continue;
            Index jlo, jhi;
            convdet::out_range(stride, kj - pad, Wo, W, jlo, jhi);
            if (jhi < jlo) continue;
            const Index n = jhi - jlo + 1;
            for (Index i = ilo; i <= ihi; ++i) {
              const Scalar* crow = cp + (stride * i + ki - pad) * Wo;
              convdet::StridedMap<Scalar> cs(crow + stride * jlo + kj - pad, n,
                                             Eigen::InnerStride<>(stride));
              Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dxp + i * W + jlo, n) +=
                  wk * cs;
            }
          }
        }
      }
    }
  }
  if (dw) {
    *dw = Tensor<Scalar>({Cf, Ct, K, K});
#pragma omp parallel for schedule(static)
    for (Index cf = 0; cf < Cf; ++cf)
      for (Index ct = 0; ct < Ct; ++ct)
        for (Index ki = 0; ki < K; ++ki) {
          Index ilo, ihi;
          convdet::out_range(stride, ki - pad, Ho, H, ilo, ihi);
          for (Index kj = 0; kj < K; ++kj) {
            Index jlo, jhi;
            convdet::out_range(stride, kj - pad, Wo, W, jlo, jhi);
            Scalar acc(0);
            if (jhi >= jlo) {
              const Index n = jhi - jlo + 1;
              for (Index bi = 0; bi < B; ++bi) {
                const Scalar* xp = x.data() + ((bi * Cf + cf) * H) * W;
                const Scalar* cp = cot.data() + ((bi * Ct + ct) * Ho) * Wo;
                for (Index i = ilo; i <= ihi; ++i) {
                  convdet::StridedMap<Scalar> cs(
                      cp + (stride * i + ki - pad) * Wo + stride * jlo + kj - pad, n,
                      Eigen::InnerStride<>(stride));
                  Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>> xs(xp + i * W + jlo,
                                                                               n);
                  acc += (xs * cs).sum();
                }
              }
            }
            (*dw)(cf, ct, ki, kj) = acc;
          }
        }
  }
  if (db) {
    *db = Tensor<Scalar>({Ct});
    for (Index ct = 0; ct < Ct; ++ct) {
      Scalar acc(0);
      for (Index bi = 0; bi < B; ++bi)
        acc += cot.chunk(((bi * Ct + ct) * Ho) * Wo, Ho * Wo).sum();
      (*db)[ct] = acc;
    }
  }
}

}  // namespace dna
