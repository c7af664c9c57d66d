// Adam with bias correction, one moment pair per named parameter tensor.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "dna/tensor.hpp"

namespace dna {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;

  void validate() const {
    require(lr > 0, "adam: lr must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adam: betas must be in [0,1)");
    require(eps > 0, "adam: eps must be positive");
  }
};

template <class Scalar>
class Adam {
 public:
  using Array = typename Tensor<Scalar>::Array;

  struct Slot {
    Array m, v;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const AdamConfig& config() const { return cfg_; }
  long long step() const { return step_; }

  void begin_step() { ++step_; }

  // One bias-corrected update from t.grad(). Non-finite gradients abort the
  // step with a diagnostic naming the parameter.
  void update(const std::string& name, Tensor<Scalar>& t) {
    require(step_ >= 1, "adam: update before begin_step");
    const Array& g = t.grad();
    if (!g.isFinite().all())
      throw std::runtime_error("adam: non-finite gradient for parameter '" + name + "'");
    Slot& s = slots_[name];
    if (s.m.size() == 0) {
      s.m = Array::Zero(t.numel());
      s.v = Array::Zero(t.numel());
    }
    require(s.m.size() == t.numel(), "adam: parameter '" + name + "' changed size");
    const Scalar b1 = static_cast<Scalar>(cfg_.beta1), b2 = static_cast<Scalar>(cfg_.beta2);
    s.m = b1 * s.m + (Scalar(1) - b1) * g;
    s.v = b2 * s.v + (Scalar(1) - b2) * g.square();
    const Scalar corr1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta1, double(step_)));
    const Scalar corr2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta2, double(step_)));
    t.array() -= static_cast<Scalar>(cfg_.lr) * (s.m / corr1) /
                 ((s.v / corr2).sqrt() + static_cast<Scalar>(cfg_.eps));
  }

  void reset() {
    slots_.clear();
    step_ = 0;
  }

  template <class F>
  void for_each_slot(F&& f) const {
    for (const auto& [name, slot] : slots_) f(name, slot.m, slot.v);
  }

  void restore_slot(const std::string& name, Array m, Array v) {
    slots_[name] = Slot{std::move(m), std::move(v)};
  }
  void restore_step(long long s) { step_ = s; }

 private:
  AdamConfig cfg_;
  long long step_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace dna
