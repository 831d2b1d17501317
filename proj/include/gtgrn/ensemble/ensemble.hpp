#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtgrn/graphio/expression.hpp"
#include "gtgrn/graphio/graph.hpp"
#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::ensemble {

using graphio::ExpressionMatrix;
using graphio::GeneGraph;
using graphio::ScoredEdgeList;

enum class CorrelationKind { pearson, spearman };

/// One classical inference result. `scores` covers every pair i < j in
/// canonical order; `binarized` keeps the top-k pairs.
struct InferredNetwork {
  std::string method_tag;
  ScoredEdgeList scores;
  GeneGraph binarized;
};

/// Gene-by-gene correlation matrix with unit diagonal. Zero-variance genes
/// correlate 0 with every partner.
numcore::Matrix correlation_matrix(const numcore::Matrix& values, CorrelationKind kind);

/// |correlation| per pair. Needs at least 3 samples.
ScoredEdgeList infer_correlation(const ExpressionMatrix& x, CorrelationKind kind);

/// Plug-in mutual information in nats from equal-width bins fitted per gene.
/// bins == 0 selects ceil(sqrt(samples)). The diagonal holds each gene's
/// binned entropy.
numcore::Matrix mutual_information_matrix(const numcore::Matrix& values, std::size_t bins = 0);

/// MI followed by CLR background correction
///   z_ij = sqrt(max(0, z_i)^2 + max(0, z_j)^2)
/// where z_i standardizes MI_ij against gene i's MI to all other genes.
/// Needs at least 8 samples.
ScoredEdgeList infer_mi_clr(const ExpressionMatrix& x, std::size_t bins = 0);

/// |partial correlation| from the inverse of (R + ridge * I).
ScoredEdgeList infer_partial_correlation(const ExpressionMatrix& x, double ridge = 1e-3);

/// The k highest-scoring pairs; ties go to the smaller (i, j).
GeneGraph binarize_topk(const ScoredEdgeList& scores, std::size_t k,
                        const std::vector<std::string>& gene_names);

struct EnsembleOptions {
  std::vector<std::string> methods{"pearson", "mi_clr", "partial_correlation"};
  /// Edge budget per network is edges_per_gene * n.
  std::size_t edges_per_gene = 3;
  double ridge = 1e-3;
  std::size_t mi_bins = 0;
  /// Run methods on separate threads.
  bool parallel = false;
};

/// Known tags: pearson, spearman, mi_clr, partial_correlation.
ScoredEdgeList infer_by_tag(const ExpressionMatrix& x, const std::string& tag,
                            const EnsembleOptions& options = {});

std::vector<InferredNetwork> infer_ensemble(const ExpressionMatrix& x,
                                            const EnsembleOptions& options = {});

}  // namespace gtgrn::ensemble
