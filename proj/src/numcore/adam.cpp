#include "gtgrn/numcore/adam.hpp"

#include <cmath>

#include "gtgrn/errors.hpp"

namespace gtgrn::numcore {

void adam_update(Matrix& param, const Matrix& grad, AdamMoments& moments, std::uint64_t step,
                 const AdamConfig& config) {
  if (!param.same_shape(grad)) {
    throw DimensionError("adam_update: parameter " + param.shape_string() + " vs gradient " +
                         grad.shape_string());
  }
  if (step == 0) throw ContractError("adam_update: step count is 1-based");
  if (moments.m.empty() && moments.v.empty()) {
    moments.m = Matrix(param.rows(), param.cols());
    moments.v = Matrix(param.rows(), param.cols());
  }
  if (!moments.m.same_shape(param) || !moments.v.same_shape(param)) {
    throw DimensionError("adam_update: moment shape " + moments.m.shape_string() +
                         " vs parameter " + param.shape_string());
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto p = param.values();
  auto g = grad.values();
  auto m = moments.m.values();
  auto v = moments.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
  }
  require_finite(param, "adam_update");
}

void Adam::step(ParameterSet& params) {
  if (moments_.size() < params.size()) moments_.resize(params.size());
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows(), p.value.cols());
    adam_update(p.value, p.grad, moments_[i], step_, config_);
  }
  params.zero_grad();
}

}  // namespace gtgrn::numcore
