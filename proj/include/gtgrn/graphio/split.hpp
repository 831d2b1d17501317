#pragma once

#include <cstdint>
#include <vector>

#include "gtgrn/graphio/graph.hpp"

namespace gtgrn::graphio {

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Positive edges partitioned three ways, plus verified non-edges per split.
struct EdgeSplit {
  std::vector<Edge> train_pos, val_pos, test_pos;
  std::vector<Edge> train_neg, val_neg, test_neg;
  std::uint64_t seed = 0;
  double neg_ratio = 1.0;
};

/// Uniform random partition of g's edges (sizes round(train*E), round(val*E),
/// remainder to test) with round(neg_ratio * |pos|) negatives per split drawn
/// without replacement from the non-edges. Throws ContractError for bad
/// fractions or when the graph has too few non-edges.
EdgeSplit split_edges(const GeneGraph& g, const SplitFractions& fractions, double neg_ratio,
                      std::uint64_t seed);

}  // namespace gtgrn::graphio
