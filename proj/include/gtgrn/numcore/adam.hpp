#pragma once

#include <cstdint>
#include <vector>

#include "gtgrn/numcore/autodiff.hpp"
#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::numcore {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates for one parameter.
struct AdamMoments {
  Matrix m;
  Matrix v;
};

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// update count after this step. Throws DimensionError on shape disagreement.
void adam_update(Matrix& param, const Matrix& grad, AdamMoments& moments, std::uint64_t step,
                 const AdamConfig& config);

/// Adam over a whole ParameterSet, keyed by parameter position.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update using the accumulated grads, then zeroes them.
  void step(ParameterSet& params);

  std::uint64_t steps_taken() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }

 private:
  AdamConfig config_;
  std::vector<AdamMoments> moments_;
  std::uint64_t step_ = 0;
};

}  // namespace gtgrn::numcore
