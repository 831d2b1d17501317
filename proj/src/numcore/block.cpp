#include "gtgrn/numcore/block.hpp"

#include <cmath>

#include "gtgrn/errors.hpp"

namespace gtgrn::numcore {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(fan_in, fan_out, -a, a, rng);
}

void add_block_parameters(ParameterSet& params, const std::string& prefix, const BlockShape& s,
                          Rng& rng) {
  if (s.heads == 0 || s.width % s.heads != 0) {
    throw ContractError("encoder block: width " + std::to_string(s.width) + " not divisible by " +
                        std::to_string(s.heads) + " heads");
  }
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) params.add(prefix + w, xavier_uniform(s.width, s.width, rng));
  params.add(prefix + ".ln1.gain", Matrix(1, s.width, 1.0));
  params.add(prefix + ".ln1.bias", Matrix(1, s.width));
  params.add(prefix + ".ffn1.w", xavier_uniform(s.width, s.hidden, rng));
  params.add(prefix + ".ffn2.w", xavier_uniform(s.hidden, s.width, rng));
  if (s.ffn_bias) {
    params.add(prefix + ".ffn1.b", Matrix(1, s.hidden));
    params.add(prefix + ".ffn2.b", Matrix(1, s.width));
  }
  params.add(prefix + ".ln2.gain", Matrix(1, s.width, 1.0));
  params.add(prefix + ".ln2.bias", Matrix(1, s.width));
}

Var encoder_block(Tape& tape, Var x, ParameterSet& params, const std::string& prefix,
                  const BlockShape& s, const Neighborhoods& nbrs, AttentionWeights* weights_out) {
  auto p = [&](const char* name) { return tape.param(params.at(prefix + name)); };
  const Var q = matmul(x, p(".wq"));
  const Var k = matmul(x, p(".wk"));
  const Var v = matmul(x, p(".wv"));
  const Var attended = matmul(neighborhood_attention(q, k, v, nbrs, s.heads, weights_out), p(".wo"));
  const Var y = layer_norm(x + attended, p(".ln1.gain"), p(".ln1.bias"), s.ln_eps);
  Var hidden = matmul(y, p(".ffn1.w"));
  if (s.ffn_bias) hidden = add_row(hidden, p(".ffn1.b"));
  Var ffn = matmul(relu(hidden), p(".ffn2.w"));
  if (s.ffn_bias) ffn = add_row(ffn, p(".ffn2.b"));
  return layer_norm(y + ffn, p(".ln2.gain"), p(".ln2.bias"), s.ln_eps);
}

}  // namespace gtgrn::numcore
