#pragma once

#include <cstddef>
#include <string>

#include "gtgrn/numcore/attention.hpp"
#include "gtgrn/numcore/autodiff.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::numcore {

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

struct BlockShape {
  std::size_t width = 0;
  std::size_t hidden = 0;
  std::size_t heads = 1;
  bool ffn_bias = true;
  double ln_eps = 1e-5;
};

/// Registers "<prefix>.wq/.wk/.wv/.wo", "<prefix>.ffn1.w/.b", "<prefix>.ffn2.w/.b"
/// and "<prefix>.ln1/.ln2" gain and bias. Projections are Xavier-initialized,
/// norms start at gain 1, bias 0, FFN biases at 0.
void add_block_parameters(ParameterSet& params, const std::string& prefix, const BlockShape& shape,
                          Rng& rng);

/// Post-norm encoder block over arbitrary neighborhoods:
///   a = Attn(xWq, xWk, xWv) Wo;  y = LN1(x + a);  out = LN2(y + FFN(y))
/// with FFN(y) = ReLU(y W1 + b1) W2 + b2.
Var encoder_block(Tape& tape, Var x, ParameterSet& params, const std::string& prefix,
                  const BlockShape& shape, const Neighborhoods& nbrs,
                  AttentionWeights* weights_out = nullptr);

}  // namespace gtgrn::numcore
