#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::graphio {

/// Genes x samples expression values with row/column names.
struct ExpressionMatrix {
  std::vector<std::string> gene_names;
  std::vector<std::string> sample_names;
  numcore::Matrix values;

  std::size_t genes() const noexcept { return values.rows(); }
  std::size_t samples() const noexcept { return values.cols(); }

  /// Throws ContractError when name counts disagree with the matrix or names repeat.
  void validate() const;
  /// Rows selected by index, in the given order.
  ExpressionMatrix select_genes(const std::vector<std::size_t>& rows) const;
};

/// TSV: header row of sample names (first cell blank or "gene"), then one
/// row per gene: name followed by the sample values.
ExpressionMatrix parse_expression_tsv(const std::string& text, const std::string& source);
ExpressionMatrix load_expression_tsv(const std::string& path);
std::string format_expression_tsv(const ExpressionMatrix& x);
void save_expression_tsv(const ExpressionMatrix& x, const std::string& path);

struct PreprocessOptions {
  /// Genes nonzero in fewer than this fraction of samples are dropped.
  double min_cell_frac = 0.10;
  /// Bonferroni-corrected significance level of the variance test.
  double alpha = 0.01;
  bool variance_test = true;
};

struct VarianceTestRow {
  std::string gene;
  double variance = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  bool kept = false;
};

struct PreprocessReport {
  std::size_t input_genes = 0;
  std::vector<std::string> dropped_low_expression;
  std::vector<std::string> dropped_variance;
  /// Median of the per-gene sample variances fed to the variance test.
  double median_variance = 0.0;
  std::size_t degrees_of_freedom = 0;
  std::vector<VarianceTestRow> variance_tests;
  std::size_t output_genes = 0;
};

struct PreprocessResult {
  ExpressionMatrix matrix;
  PreprocessReport report;
};

/// Expression filter, variance selection, then v -> ln(1 + v).
///
/// The variance test treats (m - 1) s_g^2 / median(s^2) as chi-squared with
/// m - 1 degrees of freedom and keeps genes whose upper-tail p-value times the
/// number of tested genes is below alpha. Throws ContractError for negative
/// input and when no gene survives.
PreprocessResult preprocess_expression(const ExpressionMatrix& x,
                                       const PreprocessOptions& options = {});

}  // namespace gtgrn::graphio
