// Image quality metrics and the per-dataset report.
#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dna/losses.hpp"
#include "dna/tensor.hpp"

namespace dna {

inline constexpr double kPsnrCap = 99.0;  // reported for identical images

template <class Scalar>
double rmse(const Tensor<Scalar>& y, const Tensor<Scalar>& x) {
  return std::sqrt(double(mse_loss(y, x)));
}

template <class Scalar>
double psnr(const Tensor<Scalar>& y, const Tensor<Scalar>& x, double peak = 1.0) {
  const double r = rmse(y, x);
  if (r == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(peak / r));
}

struct MetricsRow {
  std::string image_id;
  double ssim = 0, psnr_db = 0, rmse = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  struct Summary {
    double ssim_mean = 0, ssim_std = 0;
    double psnr_mean = 0, psnr_std = 0;
    double rmse_mean = 0, rmse_std = 0;
  };

  // Population standard deviation.
  Summary summary() const {
    Summary s;
    const double n = double(rows.size());
    if (rows.empty()) return s;
    for (const auto& r : rows) {
      s.ssim_mean += r.ssim;
      s.psnr_mean += r.psnr_db;
      s.rmse_mean += r.rmse;
    }
    s.ssim_mean /= n;
    s.psnr_mean /= n;
    s.rmse_mean /= n;
    for (const auto& r : rows) {
      s.ssim_std += (r.ssim - s.ssim_mean) * (r.ssim - s.ssim_mean);
      s.psnr_std += (r.psnr_db - s.psnr_mean) * (r.psnr_db - s.psnr_mean);
      s.rmse_std += (r.rmse - s.rmse_mean) * (r.rmse - s.rmse_mean);
    }
    s.ssim_std = std::sqrt(s.ssim_std / n);
    s.psnr_std = std::sqrt(s.psnr_std / n);
    s.rmse_std = std::sqrt(s.rmse_std / n);
    return s;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(9);
    os << "image_id,ssim,psnr_db,rmse\n";
    for (const auto& r : rows)
      os << r.image_id << ',' << r.ssim << ',' << r.psnr_db << ',' << r.rmse << '\n';
    const Summary s = summary();
    os << "mean+-std," << s.ssim_mean << "+-" << s.ssim_std << ',' << s.psnr_mean << "+-"
       << s.psnr_std << ',' << s.rmse_mean << "+-" << s.rmse_std << '\n';
    return os.str();
  }

  void save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << to_csv();
  }
};

template <class Scalar>
MetricsRow evaluate_pair(const std::string& id, const Tensor<Scalar>& pred,
                         const Tensor<Scalar>& truth) {
  MetricsRow r;
  r.image_id = id;
  r.ssim = double(ssim_single(pred, truth));
  r.psnr_db = psnr(pred, truth);
  r.rmse = rmse(pred, truth);
  return r;
}

}  // namespace dna
