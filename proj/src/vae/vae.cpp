#include "gtgrn/vae/vae.hpp"

#include <cmath>
#include <numeric>

#include "gtgrn/errors.hpp"
#include "gtgrn/numcore/adam.hpp"
#include "gtgrn/numcore/block.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::vae {

using numcore::Matrix;
using numcore::Tape;
using numcore::Var;

VaeModel::VaeModel(std::size_t input_dim, const VaeConfig& config, std::uint64_t seed)
    : config_(config), input_dim_(input_dim) {
  if (input_dim == 0 || config.hidden == 0 || config.latent == 0) {
    throw ContractError("VaeModel: input, hidden and latent widths must be positive");
  }
  numcore::Rng rng(seed);
  const std::size_t h = config.hidden, dz = config.latent;
  params.add("enc1.w", numcore::xavier_uniform(input_dim, h, rng));
  params.add("enc1.b", Matrix(1, h));
  params.add("mu.w", numcore::xavier_uniform(h, dz, rng));
  params.add("mu.b", Matrix(1, dz));
  params.add("logvar.w", numcore::xavier_uniform(h, dz, rng));
  params.add("logvar.b", Matrix(1, dz));
  params.add("dec1.w", numcore::xavier_uniform(dz, h, rng));
  params.add("dec1.b", Matrix(1, h));
  params.add("dec2.w", numcore::xavier_uniform(h, input_dim, rng));
  params.add("dec2.b", Matrix(1, input_dim));
}

Matrix draw_eps(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  numcore::Rng rng(seed);
  Matrix eps(rows, cols);
  for (double& v : eps.values()) v = rng.normal();
  return eps;
}

EncoderVars encode(Tape& tape, VaeModel& model, Var x) {
  if (x.cols() != model.input_dim()) {
    throw DimensionError("vae: input width " + std::to_string(x.cols()) + ", model expects " +
                         std::to_string(model.input_dim()));
  }
  auto p = [&](const char* n) { return tape.param(model.params.at(n)); };
  const Var h = numcore::relu(numcore::add_row(numcore::matmul(x, p("enc1.w")), p("enc1.b")));
  const double c = model.config().logvar_clamp;
  return {numcore::add_row(numcore::matmul(h, p("mu.w")), p("mu.b")),
          numcore::clamp(numcore::add_row(numcore::matmul(h, p("logvar.w")), p("logvar.b")), -c, c)};
}

Var decode(Tape& tape, VaeModel& model, Var z) {
  auto p = [&](const char* n) { return tape.param(model.params.at(n)); };
  const Var h = numcore::relu(numcore::add_row(numcore::matmul(z, p("dec1.w")), p("dec1.b")));
  return numcore::add_row(numcore::matmul(h, p("dec2.w")), p("dec2.b"));
}

Var reparameterize(Tape& tape, const EncoderVars& enc, const Matrix& eps) {
  if (eps.rows() != enc.mu.rows() || eps.cols() != enc.mu.cols()) {
    throw DimensionError("vae: eps shape " + eps.shape_string() + " does not match mu " + enc.mu.value().shape_string());
  }
  const Var sigma = numcore::exp(numcore::scale(enc.log_var, 0.5));
  return enc.mu + numcore::mul(sigma, tape.constant(eps));
}

LatentBatch vae_encode(VaeModel& model, const Matrix& x, const Matrix& eps) {
  Tape tape;
  const auto enc = encode(tape, model, tape.constant(x));
  const Var z = reparameterize(tape, enc, eps);
  return {enc.mu.value(), enc.log_var.value(), z.value(), eps};
}

LatentBatch vae_encode(VaeModel& model, const Matrix& x, std::uint64_t seed) {
  return vae_encode(model, x, draw_eps(x.rows(), model.config().latent, seed));
}

ElboVars elbo(Tape& tape, VaeModel& model, const Matrix& x, const Matrix& eps) {
  if (x.rows() == 0) throw ContractError("vae_elbo: empty batch");
  const Var xv = tape.constant(x);
  const auto enc = encode(tape, model, xv);
  const Var z = reparameterize(tape, enc, eps);
  const Var x_hat = decode(tape, model, z);
  const double per_example = 0.5 / static_cast<double>(x.rows());
  const Var recon = numcore::scale(numcore::sum(numcore::square(x_hat - xv)), per_example);
  const Var kl_terms = numcore::add_scalar(numcore::exp(enc.log_var) + numcore::square(enc.mu) - enc.log_var, -1.0);
  const Var kl = numcore::scale(numcore::sum(kl_terms), per_example);
  return {recon + kl, recon, kl};
}

ElboValue vae_elbo(VaeModel& model, const Matrix& x, std::uint64_t seed) {
  Tape tape;
  const auto e = elbo(tape, model, x, draw_eps(x.rows(), model.config().latent, seed));
  return {e.loss.value()(0, 0), e.recon.value()(0, 0), e.kl.value()(0, 0)};
}

double gaussian_kl(double mu, double sigma) {
  return 0.5 * (sigma * sigma + mu * mu - 1.0 - std::log(sigma * sigma));
}

VaeTrainReport train_vae(VaeModel& model, const graphio::ExpressionMatrix& x, std::uint64_t seed) {
  const VaeConfig& cfg = model.config();
  VaeTrainReport report;
  if (cfg.epochs == 0) return report;
  const Matrix& values = x.values;
  if (values.rows() == 0) throw ContractError("train_vae: no genes");
  if (values.cols() != model.input_dim()) throw DimensionError("train_vae: sample count does not match the model");
  numcore::AdamConfig acfg;
  acfg.lr = cfg.lr;
  numcore::Adam adam(acfg);
  const std::size_t n = values.rows(), bs = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    numcore::Rng shuffler(numcore::derive_seed(seed, {0, e}));
    shuffler.shuffle(std::span<std::size_t>(order));
    double loss = 0, recon = 0, kl = 0;
    for (std::size_t start = 0, b = 0; start < n; start += bs, ++b) {
      const std::size_t count = std::min(bs, n - start);
      Matrix batch(count, values.cols());
      for (std::size_t r = 0; r < count; ++r) {
        const auto src = values.row(order[start + r]);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
      }
      Tape tape;
      const auto terms = elbo(tape, model, batch, draw_eps(count, cfg.latent, numcore::derive_seed(seed, {1, e, b})));
      tape.backward(terms.loss);
      adam.step(model.params);
      const double w = static_cast<double>(count);
      loss += terms.loss.value()(0, 0) * w;
      recon += terms.recon.value()(0, 0) * w;
      kl += terms.kl.value()(0, 0) * w;
    }
    report.loss.push_back(loss / static_cast<double>(n));
    report.recon.push_back(recon / static_cast<double>(n));
    report.kl.push_back(kl / static_cast<double>(n));
  }
  return report;
}

Matrix extract_expression_embeddings(VaeModel& model, const Matrix& x) {
  Tape tape;
  return encode(tape, model, tape.constant(x)).mu.value();
}

Matrix reconstruct(VaeModel& model, const Matrix& x) {
  Tape tape;
  return decode(tape, model, encode(tape, model, tape.constant(x)).mu).value();
}

}  // namespace gtgrn::vae
