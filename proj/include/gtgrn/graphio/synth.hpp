#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gtgrn/graphio/expression.hpp"
#include "gtgrn/graphio/graph.hpp"

namespace gtgrn::graphio {

/// Gene names "G000".."G199" style, zero-padded to at least 3 digits.
std::vector<std::string> synthetic_gene_names(std::size_t n);

/// Preferential attachment: nodes 0..m_attach-1 form a clique; every later
/// node t links to m_attach distinct earlier nodes drawn one at a time with
/// probability proportional to current degree (uniform while all candidates
/// have degree 0). Edge count is C(m_attach, 2) + (n - m_attach) * m_attach.
GeneGraph synth_scale_free_grn(std::size_t n, std::size_t m_attach, std::uint64_t seed);

struct SimulationOptions {
  std::size_t rounds = 3;
  double weight_min = 0.5;
  double weight_max = 1.5;
};

/// Linear additive regulation. Each edge is oriented from the lower index
/// (regulator) to the higher index (target) and carries a fixed weight with
/// random sign and magnitude in [weight_min, weight_max]. Per sample, every
/// gene draws an exogenous N(0, 1) value and a noise term N(0, noise_sd^2).
/// Genes with no regulator keep the exogenous value; the others are updated
/// synchronously for `rounds` rounds as the mean of weight * regulator value
/// plus their noise term. The matrix is finally shifted by its global minimum.
ExpressionMatrix simulate_expression(const GeneGraph& g, std::size_t samples, double noise_sd,
                                     std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace gtgrn::graphio
