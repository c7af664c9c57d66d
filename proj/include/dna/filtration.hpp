// Sinogram filtration: the fixed Fourier-domain ramp used by analytic FBP
// and the learnable 1-D convolution stack that precedes the backprojection
// layer.
//
// ramp_filter pads each detector row to twice its length, multiplies the
// spectrum by |frequency| (cycles per sample, so H[k] = min(k, Lf-k)/Lf), and
// crops back. The pad region extends the row's edge values (half from each
// end, keeping the circular seams continuous) rather than holding zeros: on
// circle-masked projections the edges are zero so both conventions coincide,
// and edge extension preserves the exact zero response to constant rows that
// the DC-free ramp promises. The map is linear; its exact transpose
// (ramp_filter_vjp) is the zero-pad variant followed by folding the pad
// region's cotangent back onto the edge samples.
#pragma once

#include <vector>

#include "dna/conv.hpp"
#include "dna/dft.hpp"
#include "dna/tensor.hpp"

namespace dna {

namespace rampdet {

template <class Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 1> response(Index Lf) {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> H(Lf);
  for (Index k = 0; k < Lf; ++k)
    H[k] = static_cast<Scalar>(double(std::min(k, Lf - k)) / double(Lf));
  return H;
}

// Circular ramp filtering of one length-Lf buffer, in place.
template <class Scalar>
void filter_row(ComplexVec<Scalar>& row, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& H) {
  ComplexVec<Scalar> spec = dft_1d(row);
  for (Index k = 0; k < H.size(); ++k) spec[k] *= H[k];
  row = idft_1d(spec);
}

}  // namespace rampdet

// Filters the last axis of any [..., rows, D] tensor row by row.
template <class Scalar>
Tensor<Scalar> ramp_filter(const Tensor<Scalar>& sino) {
  require(sino.rank() >= 2, "ramp_filter: need at least 2 dimensions");
  const Index D = sino.dim(sino.rank() - 1);
  const Index Lf = 2 * D;
  const auto H = rampdet::response<Scalar>(Lf);

  Tensor<Scalar> out(sino.shape());
  const Index rows = sino.numel() / D;
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < rows; ++r) {
    ComplexVec<Scalar> row(Lf);
    const Scalar* src = sino.data() + r * D;
    for (Index i = 0; i < D; ++i) row[i] = std::complex<Scalar>(src[i], Scalar(0));
    // edge extension: tail half continues src[D-1], head half wraps to src[0]
    for (Index i = D; i < D + D / 2; ++i) row[i] = std::complex<Scalar>(src[D - 1], Scalar(0));
    for (Index i = D + D / 2; i < Lf; ++i) row[i] = std::complex<Scalar>(src[0], Scalar(0));
    rampdet::filter_row(row, H);
    Scalar* dst = out.data() + r * D;
    for (Index i = 0; i < D; ++i) dst[i] = row[i].real();
  }
  return out;
}

// Exact transpose of ramp_filter: zero-pad the cotangent, run the circular
// filter, keep the first D samples and fold the pad region's response back
// onto the replicated edge samples.
template <class Scalar>
Tensor<Scalar> ramp_filter_vjp(const Tensor<Scalar>& cot) {
  require(cot.rank() >= 2, "ramp_filter_vjp: need at least 2 dimensions");
  const Index D = cot.dim(cot.rank() - 1);
  const Index Lf = 2 * D;
  const auto H = rampdet::response<Scalar>(Lf);

  Tensor<Scalar> out(cot.shape());
  const Index rows = cot.numel() / D;
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < rows; ++r) {
    ComplexVec<Scalar> row = ComplexVec<Scalar>::Zero(Lf);
    const Scalar* src = cot.data() + r * D;
    for (Index i = 0; i < D; ++i) row[i] = std::complex<Scalar>(src[i], Scalar(0));
    rampdet::filter_row(row, H);
    Scalar* dst = out.data() + r * D;
    for (Index i = 0; i < D; ++i) dst[i] = row[i].real();
    for (Index i = D; i < D + D / 2; ++i) dst[D - 1] += row[i].real();
    for (Index i = D + D / 2; i < Lf; ++i) dst[0] += row[i].real();
  }
  return out;
}

// Discrete ramp kernel: the centered impulse response of ramp_filter on a
// length-Lf grid, truncated to `taps` (odd). Used for initialization and as
// a reference for the learned stack.
template <class Scalar>
Tensor<Scalar> ramp_kernel(Index taps, Index Lf) {
  require(taps % 2 == 1, "ramp_kernel: taps must be odd");
  require(taps <= Lf, "ramp_kernel: taps exceed transform length");
  ComplexVec<Scalar> H(Lf);
  for (Index k = 0; k < Lf; ++k)
    H[k] = std::complex<Scalar>(
        static_cast<Scalar>(double(std::min(k, Lf - k)) / double(Lf)), Scalar(0));
  ComplexVec<Scalar> h = idft_1d(H);
  Tensor<Scalar> kern({taps});
  const Index half = taps / 2;
  for (Index i = 0; i < taps; ++i) {
    const Index n = i - half;
    kern[i] = h[(n % Lf + Lf) % Lf].real();
  }
  return kern;
}

// Learnable per-row filter: a stack of 1-D convolutions applied independently
// to each view, stride 1, zero padding preserving length. Residual layers add
// their input back and therefore require matching channel counts. The stack
// is linear by design; composed layers act as one cascaded filter.
template <class Scalar>
struct FilterStackParams {
  struct Layer {
    Tensor<Scalar> w;  // [Cout, Cin, K]
    Tensor<Scalar> b;  // [Cout]
    bool residual = false;
  };
  std::vector<Layer> layers;
  Index kernel_len = 0;

  static Index taps_for(Index n_detectors) {
    Index k = std::max<Index>(1, n_detectors / 4);
    return k % 2 == 1 ? k : k + 1;
  }

  static FilterStackParams shaped(Index n_detectors, const std::vector<Index>& channels = {1, 8, 8, 1}) {
    require(channels.size() >= 2 && channels.front() == 1 && channels.back() == 1,
            "filter stack: channel chain must start and end at 1");
    FilterStackParams p;
    p.kernel_len = taps_for(n_detectors);
    for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
      Layer layer;
      layer.w = Tensor<Scalar>({channels[l + 1], channels[l], p.kernel_len});
      layer.b = Tensor<Scalar>({channels[l + 1]});
      layer.residual = channels[l] == channels[l + 1];
      p.layers.push_back(std::move(layer));
    }
    return p;
  }

  // Exact pass-through: first layer copies the input into every channel,
  // residual layers hold zero kernels, the head picks channel 0.
  static FilterStackParams identity(Index n_detectors,
                                    const std::vector<Index>& channels = {1, 8, 8, 1}) {
    FilterStackParams p = shaped(n_detectors, channels);
    const Index mid = p.kernel_len / 2;
    auto& first = p.layers.front();
    for (Index co = 0; co < first.w.dim(0); ++co) first.w(co, 0, mid) = Scalar(1);
    auto& last = p.layers.back();
    last.w(0, 0, mid) = Scalar(1);
    // non-residual middle layers (if any) pass channels straight through
    for (std::size_t l = 1; l + 1 < p.layers.size(); ++l) {
      auto& layer = p.layers[l];
      if (!layer.residual)
        for (Index c = 0; c < std::min(layer.w.dim(0), layer.w.dim(1)); ++c)
          layer.w(c, c, mid) = Scalar(1);
    }
    return p;
  }

  // Identity-like start plus exploration noise: training begins close to the
  // analytic filter path.
  static FilterStackParams init(Index n_detectors, const Rng& rng, Scalar sigma = Scalar(0.01),
                                const std::vector<Index>& channels = {1, 8, 8, 1}) {
    FilterStackParams p = shaped(n_detectors, channels);
    const Index mid = p.kernel_len / 2;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& layer = p.layers[l];
      layer.w = Tensor<Scalar>::randn(layer.w.shape(), rng.stream(2 * l), sigma);
      if (l == 0)
        for (Index co = 0; co < layer.w.dim(0); ++co) layer.w(co, 0, mid) += Scalar(1);
      if (l + 1 == p.layers.size()) {
        const Scalar spread = Scalar(1) / static_cast<Scalar>(layer.w.dim(1));
        for (Index ci = 0; ci < layer.w.dim(1); ++ci) layer.w(0, ci, mid) += spread;
      }
    }
    return p;
  }
};

template <class Scalar>
struct FilterTrace {
  std::vector<Tensor<Scalar>> layer_inputs;  // [rows, C, D] per layer
};

// x: [B, 1, V, D] -> same shape. Rows are treated as independent 1-D signals.
template <class Scalar>
Tensor<Scalar> learned_filter(const Tensor<Scalar>& x, const FilterStackParams<Scalar>& params,
                              FilterTrace<Scalar>* trace = nullptr) {
  require(x.rank() == 4 && x.dim(1) == 1,
          "learned_filter: input must be [B,1,V,D], got " + shape_str(x.shape()));
  const Index B = x.dim(0), V = x.dim(2), D = x.dim(3);
  require(!params.layers.empty(), "learned_filter: empty stack");
  require(params.layers.front().w.dim(2) <= D + 2 * ((params.kernel_len - 1) / 2),
          "learned_filter: kernel length " + std::to_string(params.kernel_len) +
              " too long for " + std::to_string(D) + " detectors");
  const Index pad = (params.kernel_len - 1) / 2;

  Tensor<Scalar> cur = x.reshaped({B * V, 1, D});
  for (const auto& layer : params.layers) {
    if (trace) trace->layer_inputs.push_back(cur);
    Tensor<Scalar> next = conv1d(cur, layer.w, layer.b, 1, pad);
    if (layer.residual) {
      check_same_shape(next, cur, "learned_filter residual");
      next.array() += cur.array();
    }
    cur = std::move(next);
  }
  require(cur.dim(1) == 1, "learned_filter: stack must end at one channel");
  return cur.reshaped({B, 1, V, D});
}

// Accumulates dw/db per layer into grads[l] pairs; returns cotangent w.r.t. x.
template <class Scalar>
Tensor<Scalar> learned_filter_vjp(const FilterStackParams<Scalar>& params,
                                  const FilterTrace<Scalar>& trace, const Tensor<Scalar>& cot,
                                  std::vector<Tensor<Scalar>>* dw, std::vector<Tensor<Scalar>>* db) {
  const Index B = cot.dim(0), V = cot.dim(2), D = cot.dim(3);
  const Index pad = (params.kernel_len - 1) / 2;
  const std::size_t L = params.layers.size();
  require(trace.layer_inputs.size() == L, "learned_filter_vjp: trace does not match stack");
  if (dw) dw->resize(L);
  if (db) db->resize(L);

  Tensor<Scalar> g = cot.reshaped({B * V, 1, D});
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = params.layers[l];
    Tensor<Scalar> dx, dwl, dbl;
    conv1d_vjp(trace.layer_inputs[l], layer.w, 1, pad, g,
               &dx, dw ? &dwl : nullptr, db ? &dbl : nullptr);
    if (dw) (*dw)[l] = std::move(dwl);
    if (db) (*db)[l] = std::move(dbl);
    if (layer.residual) dx.array() += g.array();
    g = std::move(dx);
  }
  return g.reshaped({B, 1, V, D});
}

}  // namespace dna
