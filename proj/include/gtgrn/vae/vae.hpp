#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gtgrn/graphio/expression.hpp"
#include "gtgrn/numcore/autodiff.hpp"

namespace gtgrn::vae {

struct VaeConfig {
  std::size_t hidden = 128;
  std::size_t latent = 64;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  /// log sigma^2 is clamped to [-logvar_clamp, logvar_clamp] before use.
  double logvar_clamp = 10.0;
};

/// Encoder x -> ReLU(x W1 + b1) -> (mu, log sigma^2); decoder
/// z -> ReLU(z D1 + c1) D2 + c2. All weights Xavier-uniform, biases zero.
class VaeModel {
 public:
  VaeModel(std::size_t input_dim, const VaeConfig& config, std::uint64_t seed);

  const VaeConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }

  numcore::ParameterSet params;

 private:
  VaeConfig config_;
  std::size_t input_dim_ = 0;
};

struct LatentBatch {
  numcore::Matrix mu;
  numcore::Matrix log_var;
  numcore::Matrix z;
  /// The standard-normal draw behind z, kept so the sample can be replayed.
  numcore::Matrix eps;
};

/// Standard-normal matrix from a seed; the source of every eps.
numcore::Matrix draw_eps(std::size_t rows, std::size_t cols, std::uint64_t seed);

LatentBatch vae_encode(VaeModel& model, const numcore::Matrix& x, std::uint64_t seed);
LatentBatch vae_encode(VaeModel& model, const numcore::Matrix& x, const numcore::Matrix& eps);

struct EncoderVars {
  numcore::Var mu;
  numcore::Var log_var;
};

EncoderVars encode(numcore::Tape& tape, VaeModel& model, numcore::Var x);
numcore::Var decode(numcore::Tape& tape, VaeModel& model, numcore::Var z);

/// z = mu + exp(log_var / 2) * eps.
numcore::Var reparameterize(numcore::Tape& tape, const EncoderVars& enc, const numcore::Matrix& eps);

struct ElboVars {
  numcore::Var loss;
  numcore::Var recon;
  numcore::Var kl;
};

/// Negative ELBO with a unit-variance Gaussian likelihood:
///   recon = 1/2 sum_features (x - x_hat)^2,  kl = 1/2 sum (sigma^2 + mu^2 - 1 - log sigma^2),
/// each summed per example and averaged over the batch.
ElboVars elbo(numcore::Tape& tape, VaeModel& model, const numcore::Matrix& x, const numcore::Matrix& eps);

struct ElboValue {
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

ElboValue vae_elbo(VaeModel& model, const numcore::Matrix& x, std::uint64_t seed);

/// Closed-form KL(N(mu, sigma^2) || N(0, 1)) for one coordinate.
double gaussian_kl(double mu, double sigma);

struct VaeTrainReport {
  std::vector<double> loss;
  std::vector<double> recon;
  std::vector<double> kl;
};

/// Genes (rows of x) are the examples. Adam on the negative ELBO with
/// per-epoch shuffling; every draw comes from seeds derived from `seed`.
VaeTrainReport train_vae(VaeModel& model, const graphio::ExpressionMatrix& x, std::uint64_t seed);

/// Per-gene latent means; no sampling.
numcore::Matrix extract_expression_embeddings(VaeModel& model, const numcore::Matrix& x);

/// decode(mu(x)).
numcore::Matrix reconstruct(VaeModel& model, const numcore::Matrix& x);

}  // namespace gtgrn::vae
