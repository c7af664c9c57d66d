// Phantom generation, corpus ingestion and on-disk formats.
//
// RAW interchange format: magic "IMG1" (images) or "SIN1" (sinograms),
// two u32 LE dims (rows, cols), then 32-bit LE floats row-major. PGM output
// is P5 with maxval 65535 (two bytes per sample, most significant first) for
// viewing; RAW is the lossless format.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dna/geometry.hpp"
#include "dna/tensor.hpp"

namespace dna {

// ---------------------------------------------------------------------------
// Phantoms and textures
// ---------------------------------------------------------------------------

struct Ellipse {
  double cy = 0, cx = 0;      // center in [-1,1] normalized image coords
  double a = 0.5, b = 0.5;    // semi-axes, normalized
  double phi = 0;             // rotation, radians
  double intensity = 0.5;     // additive
};

struct EllipsePhantomSpec {
  std::vector<Ellipse> ellipses;
  std::uint64_t seed = 0;
};

template <class Scalar>
Tensor<Scalar> render_phantom(const EllipsePhantomSpec& spec, Index n) {
  Tensor<Scalar> img({n, n});
  const double ctr = 0.5 * double(n - 1);
  const double scale = 2.0 / double(n);
  for (const Ellipse& e : spec.ellipses) {
    const double cp = std::cos(e.phi), sp = std::sin(e.phi);
    for (Index r = 0; r < n; ++r) {
      const double y = (double(r) - ctr) * scale - e.cy;
      for (Index c = 0; c < n; ++c) {
        const double x = (double(c) - ctr) * scale - e.cx;
        const double u = cp * x + sp * y;
        const double v = -sp * x + cp * y;
        if (u * u / (e.a * e.a) + v * v / (e.b * e.b) <= 1.0)
          img(r, c) += static_cast<Scalar>(e.intensity);
      }
    }
  }
  img.array() = img.array().min(Scalar(1)).max(Scalar(0));
  return circle_mask(img);
}

// Random abdominal-ish phantom: one body ellipse plus a few inner structures.
inline EllipsePhantomSpec random_phantom_spec(const Rng& rng) {
  EllipsePhantomSpec spec;
  std::uint64_t k = 0;
  auto u = [&](double lo, double hi) { return rng.uniform(k++, lo, hi); };

  Ellipse body;
  body.cy = u(-0.06, 0.06);
  body.cx = u(-0.06, 0.06);
  body.a = u(0.55, 0.8);
  body.b = u(0.5, 0.75);
  body.phi = u(0, kPi);
  body.intensity = u(0.25, 0.45);
  spec.ellipses.push_back(body);

  const int inner = 2 + int(rng.below(k++, 5));
  for (int i = 0; i < inner; ++i) {
    Ellipse e;
    e.cy = u(-0.45, 0.45);
    e.cx = u(-0.45, 0.45);
    e.a = u(0.05, 0.3);
    e.b = u(0.05, 0.3);
    e.phi = u(0, kPi);
    e.intensity = u(0.08, 0.4) * (rng.below(k++, 4) == 0 ? -1.0 : 1.0);
    spec.ellipses.push_back(e);
  }
  return spec;
}

// Natural-image stand-in: smoothed noise, an illumination gradient and a few
// soft rectangles, min-max normalized to [0,1]. Not circle-masked; corpus
// ingestion applies normalize_and_mask.
template <class Scalar>
Tensor<Scalar> texture_image(Index n, const Rng& rng) {
  Tensor<Scalar> img = Tensor<Scalar>::rand_uniform({n, n}, rng.stream(1));
  // three box-blur passes
  for (int pass = 0; pass < 3; ++pass) {
    Tensor<Scalar> out({n, n});
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) {
        double acc = 0, cnt = 0;
        for (Index dr = -2; dr <= 2; ++dr)
          for (Index dc = -2; dc <= 2; ++dc) {
            const Index rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
            acc += double(img(rr, cc));
            cnt += 1;
          }
        out(r, c) = static_cast<Scalar>(acc / cnt);
      }
    img = std::move(out);
  }
  const double gx = rng.uniform(100, -0.5, 0.5), gy = rng.uniform(101, -0.5, 0.5);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      img(r, c) += static_cast<Scalar>(gx * double(c) / double(n) + gy * double(r) / double(n));
  const int rects = 2 + int(rng.below(102, 4));
  std::uint64_t k = 200;
  for (int i = 0; i < rects; ++i) {
    const Index r0 = Index(rng.below(k++, std::uint64_t(n)));
    const Index c0 = Index(rng.below(k++, std::uint64_t(n)));
    const Index h = 2 + Index(rng.below(k++, std::uint64_t(n / 3)));
    const Index w = 2 + Index(rng.below(k++, std::uint64_t(n / 3)));
    const double v = rng.uniform(k++, -0.4, 0.4);
    for (Index r = r0; r < std::min(n, r0 + h); ++r)
      for (Index c = c0; c < std::min(n, c0 + w); ++c) img(r, c) += static_cast<Scalar>(v);
  }
  const Scalar lo = img.array().minCoeff(), hi = img.array().maxCoeff();
  if (hi > lo)
    img.array() = (img.array() - lo) / (hi - lo);
  else
    img.array() = Scalar(0);
  return img;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Bilinear resize with half-pixel-aligned sample centers.
template <class Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& src, Index out_n) {
  require(src.rank() == 2, "resize_bilinear: need a 2-D image");
  const Index H = src.dim(0), W = src.dim(1);
  if (H == out_n && W == out_n) return src;
  Tensor<Scalar> out({out_n, out_n});
  const double sy = double(H) / double(out_n), sx = double(W) / double(out_n);
  for (Index r = 0; r < out_n; ++r) {
    const double fy = std::min(std::max((double(r) + 0.5) * sy - 0.5, 0.0), double(H - 1));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - double(y0);
    for (Index c = 0; c < out_n; ++c) {
      const double fx = std::min(std::max((double(c) + 0.5) * sx - 0.5, 0.0), double(W - 1));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - double(x0);
      out(r, c) = static_cast<Scalar>((1 - wy) * ((1 - wx) * double(src(y0, x0)) +
                                                  wx * double(src(y0, x1))) +
                                      wy * ((1 - wx) * double(src(y1, x0)) +
                                            wx * double(src(y1, x1))));
    }
  }
  return out;
}

// Min-max normalize to [0,1] (constant images go to all zeros), resize to
// n x n, apply the circle mask.
template <class Scalar>
Tensor<Scalar> normalize_and_mask(const Tensor<Scalar>& raw, Index n) {
  require(raw.rank() == 2, "normalize_and_mask: need a 2-D image");
  raw.require_finite("normalize_and_mask input");
  const Scalar lo = raw.array().minCoeff(), hi = raw.array().maxCoeff();
  Tensor<Scalar> norm(raw.shape());
  if (hi > lo)
    norm.array() = (raw.array() - lo) / (hi - lo);
  return circle_mask(resize_bilinear(norm, n));
}

// ---------------------------------------------------------------------------
// PGM (P5, 16-bit)
// ---------------------------------------------------------------------------

template <class Scalar>
void save_pgm(const std::string& path, const Tensor<Scalar>& img) {
  require(img.rank() == 2, "save_pgm: need a 2-D image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_pgm: cannot open " + path);
  os << "P5\n" << img.dim(1) << ' ' << img.dim(0) << "\n65535\n";
  for (Index i = 0; i < img.numel(); ++i) {
    const double v = std::min(1.0, std::max(0.0, double(img[i])));
    const std::uint16_t q = static_cast<std::uint16_t>(v * 65535.0 + 0.5);
    os.put(static_cast<char>(q >> 8));   // most significant byte first
    os.put(static_cast<char>(q & 0xff));
  }
  if (!os) throw std::runtime_error("save_pgm: write to " + path + " failed");
}

namespace iodet {

inline int pgm_next_token(std::istream& is, std::string& tok) {
  tok.clear();
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return 1;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok.empty() ? 0 : 1;
}

}  // namespace iodet

template <class Scalar = float>
Tensor<Scalar> load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_pgm: cannot open " + path);
  std::string tok;
  if (!iodet::pgm_next_token(is, tok) || tok != "P5")
    throw std::runtime_error("load_pgm: " + path + " is not a P5 PGM");
  auto next_int = [&](const char* what) {
    if (!iodet::pgm_next_token(is, tok))
      throw std::runtime_error("load_pgm: " + path + ": missing " + what);
    return std::stol(tok);
  };
  const long w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw std::runtime_error("load_pgm: " + path + ": bad header");
  Tensor<Scalar> img({Index(h), Index(w)});
  const bool two_byte = maxval > 255;
  for (Index i = 0; i < img.numel(); ++i) {
    int hi = is.get();
    if (hi == EOF)
      throw std::runtime_error("load_pgm: " + path + ": truncated at sample " +
                               std::to_string(i) + " of " + std::to_string(img.numel()));
    long q = hi;
    if (two_byte) {
      const int lo = is.get();
      if (lo == EOF)
        throw std::runtime_error("load_pgm: " + path + ": truncated at sample " +
                                 std::to_string(i) + " of " + std::to_string(img.numel()));
      q = (long(hi) << 8) | long(lo);
    }
    img[i] = static_cast<Scalar>(double(q) / double(maxval));
  }
  return img;
}

// ---------------------------------------------------------------------------
// RAW float format
// ---------------------------------------------------------------------------

template <class Scalar>
void save_raw(const std::string& path, const Tensor<Scalar>& t, const std::string& magic) {
  require(t.rank() == 2, "save_raw: need a 2-D tensor");
  require(magic == "IMG1" || magic == "SIN1", "save_raw: magic must be IMG1 or SIN1");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_raw: cannot open " + path);
  os.write(magic.data(), 4);
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(t.dim(0)));
  put_u32(static_cast<std::uint32_t>(t.dim(1)));
  for (Index i = 0; i < t.numel(); ++i) {
    const float v = static_cast<float>(t[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
  if (!os) throw std::runtime_error("save_raw: write to " + path + " failed");
}

template <class Scalar = float>
std::pair<std::string, Tensor<Scalar>> load_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_raw: cannot open " + path);
  char magic[5] = {0};
  if (!is.read(magic, 4))
    throw std::runtime_error("load_raw: " + path + ": truncated magic at byte 0");
  const std::string m(magic, 4);
  if (m != "IMG1" && m != "SIN1")
    throw std::runtime_error("load_raw: " + path + ": unknown magic '" + m + "' at byte 0");
  auto get_u32 = [&](std::uint32_t& v, long offset) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
      throw std::runtime_error("load_raw: " + path + ": truncated at byte " +
                               std::to_string(offset));
    v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  };
  std::uint32_t rows, cols;
  get_u32(rows, 4);
  get_u32(cols, 8);
  if (rows == 0 || cols == 0 || std::uint64_t(rows) * cols > (1ull << 28))
    throw std::runtime_error("load_raw: " + path + ": implausible dims " + std::to_string(rows) +
                             "x" + std::to_string(cols) + " at byte 4");
  Tensor<Scalar> t({Index(rows), Index(cols)});
  const long expect = 12 + 4 * long(t.numel());
  for (Index i = 0; i < t.numel(); ++i) {
    std::uint32_t bits;
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
      throw std::runtime_error("load_raw: " + path + ": truncated at byte " +
                               std::to_string(12 + 4 * i) + " (expected " +
                               std::to_string(expect) + " bytes)");
    bits = 0;
    for (int j = 0; j < 4; ++j) bits |= std::uint32_t(b[j]) << (8 * j);
    float v;
    std::memcpy(&v, &bits, 4);
    t[i] = static_cast<Scalar>(v);
  }
  return {m, std::move(t)};
}

// ---------------------------------------------------------------------------
// Dataset manifest and assembly
// ---------------------------------------------------------------------------

enum class DataRole { train, val, test };

inline const char* role_name(DataRole r) {
  switch (r) {
    case DataRole::train: return "train";
    case DataRole::val: return "val";
    default: return "test";
  }
}

struct DatasetManifest {
  struct Entry {
    std::string path;
    DataRole role = DataRole::train;
  };
  std::vector<Entry> entries;
  GeometryConfig geo;
};

template <class Scalar>
struct Dataset {
  GeometryConfig geo;
  std::vector<std::string> ids;
  std::vector<Tensor<Scalar>> images;     // [N,N], normalized + masked
  std::vector<Tensor<Scalar>> sinograms;  // [V,N], synthesized on load

  std::size_t size() const { return images.size(); }
};

template <class Scalar>
Tensor<Scalar> load_any_image(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") return load_pgm<Scalar>(path);
  auto [magic, t] = load_raw<Scalar>(path);
  require(magic == "IMG1", "load_any_image: " + path + " holds a sinogram, not an image");
  return t;
}

// Deterministic ordered load; unreadable entries are skipped with a warning,
// and more than 10% skipped is an error.
template <class Scalar>
Dataset<Scalar> build_dataset(const DatasetManifest& manifest) {
  manifest.geo.validate();
  Dataset<Scalar> ds;
  ds.geo = manifest.geo;
  std::size_t skipped = 0;
  for (const auto& entry : manifest.entries) {
    try {
      Tensor<Scalar> img =
          normalize_and_mask(load_any_image<Scalar>(entry.path), manifest.geo.image_size);
      ds.sinograms.push_back(radon_forward(img, manifest.geo));
      ds.images.push_back(std::move(img));
      ds.ids.push_back(entry.path);
    } catch (const std::exception& e) {
      ++skipped;
      std::cerr << "warning: skipping " << entry.path << ": " << e.what() << "\n";
    }
  }
  if (skipped * 10 > manifest.entries.size())
    throw std::runtime_error("build_dataset: " + std::to_string(skipped) + " of " +
                             std::to_string(manifest.entries.size()) + " entries unreadable");
  return ds;
}

}  // namespace dna
