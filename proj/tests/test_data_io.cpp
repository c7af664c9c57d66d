#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dna/data_io.hpp"
#include "oracles.hpp"

using namespace dna;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dna_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("render_phantom: empty spec, centered disk geometry, area oracle") {
  EllipsePhantomSpec empty;
  TensorF z = render_phantom<float>(empty, 32);
  for (Index i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0f);

  EllipsePhantomSpec disk;
  disk.ellipses.push_back({0, 0, 0.5, 0.5, 0, 1.0});
  const Index N = 64;
  TensorF img = render_phantom<float>(disk, N);
  CHECK(img(N / 2, N / 2) == 1.0f);
  CHECK(img(2, 2) == 0.0f);
  // contiguous support on the center row spans about 2 * 0.5 * N/2 pixels
  Index lo = N, hi = -1;
  for (Index c = 0; c < N; ++c)
    if (img(N / 2, c) > 0) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  CHECK(std::abs(double(hi - lo + 1) - 0.5 * N) <= 3.0);

  // interior pixel count tracks pi r^2 within 2% at N=256
  TensorF big = render_phantom<float>(disk, 256);
  double count = 0;
  for (Index i = 0; i < big.numel(); ++i) count += big[i] > 0.5f ? 1.0 : 0.0;
  const double want = kPi * 64.0 * 64.0;
  CHECK(std::abs(count - want) / want < 0.02);
}

TEST_CASE("random phantoms are valid images") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto spec = random_phantom_spec(Rng(s));
    TensorF img = render_phantom<float>(spec, 48);
    CHECK(img.array().minCoeff() >= 0.0f);
    CHECK(img.array().maxCoeff() <= 1.0f);
    TensorF masked = circle_mask(img);
    for (Index i = 0; i < img.numel(); ++i) CHECK(img[i] == masked[i]);
  }
}

TEST_CASE("normalize_and_mask rules") {
  TensorF constant = TensorF::full({20, 20}, 3.7f);
  TensorF z = normalize_and_mask(constant, 16);
  for (Index i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0f);

  Rng rng(3);
  TensorF already = circle_mask(TensorF::rand_uniform({16, 16}, rng));
  // force exact 0/1 extremes inside the circle so min-max is the identity
  already(8, 8) = 1.0f;
  already(8, 7) = 0.0f;
  TensorF same = normalize_and_mask(already, 16);
  for (Index i = 0; i < same.numel(); ++i) CHECK(same[i] == already[i]);

  TensorF raw = TensorF::randn({24, 24}, rng.stream(5), 10.0f, 50.0f);
  TensorF out = normalize_and_mask(raw, 16);
  CHECK(out.array().minCoeff() >= 0.0f);
  CHECK(out.array().maxCoeff() <= 1.0f);

  TensorF bad({4, 4});
  bad[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(normalize_and_mask(bad, 16), std::runtime_error);
}

TEST_CASE("raw round trip is bit-identical; pgm is within quantization") {
  TempDir dir("io");
  Rng rng(4);
  TensorF img = TensorF::rand_uniform({12, 12}, rng.stream(1));
  const std::string rp = (dir.path / "x.raw").string();
  save_raw(rp, img, "IMG1");
  auto [magic, back] = load_raw<float>(rp);
  CHECK(magic == "IMG1");
  CHECK(back.shape() == img.shape());
  for (Index i = 0; i < img.numel(); ++i) CHECK(back[i] == img[i]);

  TensorF sino = TensorF::randn({4, 12}, rng.stream(2));
  const std::string sp = (dir.path / "s.raw").string();
  save_raw(sp, sino, "SIN1");
  CHECK(load_raw<float>(sp).first == "SIN1");

  const std::string pp = (dir.path / "x.pgm").string();
  save_pgm(pp, img);
  TensorF pgm = load_pgm<float>(pp);
  CHECK(pgm.shape() == img.shape());
  for (Index i = 0; i < img.numel(); ++i)
    CHECK(std::abs(double(pgm[i]) - double(img[i])) <= 1.0 / 65535.0 + 1e-9);
}

TEST_CASE("format parsers reject malformed input with byte context") {
  TempDir dir("bad");
  const std::string bad = (dir.path / "bad.raw").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "WHAT";
  }
  CHECK_THROWS_WITH_AS(load_raw<float>(bad), doctest::Contains("unknown magic"),
                       std::runtime_error);

  const std::string trunc = (dir.path / "trunc.raw").string();
  {
    TensorF img = TensorF::full({8, 8}, 0.5f);
    save_raw(trunc, img, "IMG1");
    fs::resize_file(trunc, 40);  // cut into the payload
  }
  try {
    load_raw<float>(trunc);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("truncated") != std::string::npos);
    CHECK(msg.find("268") != std::string::npos);  // expected total byte count
  }

  const std::string badpgm = (dir.path / "bad.pgm").string();
  {
    std::ofstream f(badpgm, std::ios::binary);
    f << "P5\n4 4\n65535\nxx";
  }
  CHECK_THROWS_WITH_AS(load_pgm<float>(badpgm), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("build_dataset: shapes, determinism, pair consistency, skip accounting") {
  TempDir dir("ds");
  GeometryConfig geo;
  geo.image_size = 16;
  geo.num_views = 4;

  DatasetManifest manifest;
  manifest.geo = geo;
  for (int i = 0; i < 3; ++i) {
    auto spec = random_phantom_spec(Rng(100 + std::uint64_t(i)));
    TensorF img = render_phantom<float>(spec, 16);
    const std::string p = (dir.path / ("p" + std::to_string(i) + ".raw")).string();
    save_raw(p, img, "IMG1");
    manifest.entries.push_back({p, DataRole::train});
  }

  auto ds = build_dataset<float>(manifest);
  CHECK(ds.size() == 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.sinograms[i].dim(0) == 4);
    CHECK(ds.sinograms[i].dim(1) == 16);
    TensorF again = radon_forward(ds.images[i], geo);
    for (Index j = 0; j < again.numel(); ++j) CHECK(again[j] == ds.sinograms[i][j]);
  }

  auto ds2 = build_dataset<float>(manifest);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (Index j = 0; j < ds.images[i].numel(); ++j)
      CHECK(ds.images[i][j] == ds2.images[i][j]);

  // one unreadable entry out of three exceeds the 10% budget
  manifest.entries.push_back({(dir.path / "missing.raw").string(), DataRole::train});
  CHECK_THROWS_WITH_AS(build_dataset<float>(manifest), doctest::Contains("unreadable"),
                       std::runtime_error);
}

TEST_CASE("texture images land in [0,1] and vary by seed") {
  TensorF a = texture_image<float>(32, Rng(1));
  TensorF b = texture_image<float>(32, Rng(2));
  CHECK(a.array().minCoeff() >= 0.0f);
  CHECK(a.array().maxCoeff() <= 1.0f);
  CHECK(oracle::max_abs_diff(a, b) > 1e-3);
  TensorF a2 = texture_image<float>(32, Rng(1));
  for (Index i = 0; i < a.numel(); ++i) CHECK(a[i] == a2[i]);
}
