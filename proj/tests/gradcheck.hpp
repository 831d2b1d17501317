#pragma once

// Central finite-difference oracle for tape gradients. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "gtgrn/numcore/autodiff.hpp"

namespace gtgrn::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the worst entry
  std::size_t checked = 0;
};

/// Relative error with a floor so entries whose true gradient is ~0 are
/// judged on absolute error instead.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `build` records the forward pass on the given tape (pulling parameters in
/// with tape.param) and returns the scalar loss.
inline GradCheckResult check_gradients(numcore::ParameterSet& params,
                                       const std::function<numcore::Var(numcore::Tape&)>& build,
                                       double step = 1e-5) {
  params.zero_grad();
  {
    numcore::Tape tape;
    numcore::Var loss = build(tape);
    tape.backward(loss);
  }
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    numcore::Parameter& param = params[p];
    const numcore::Matrix analytic = param.grad;
    for (std::size_t e = 0; e < param.value.size(); ++e) {
      double& x = param.value.values()[e];
      const double saved = x;
      x = saved + step;
      double up, down;
      {
        numcore::Tape t;
        up = build(t).value()(0, 0);
      }
      x = saved - step;
      {
        numcore::Tape t;
        down = build(t).value()(0, 0);
      }
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic.values()[e], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = param.name + "[" + std::to_string(e) + "]";
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace gtgrn::testing
