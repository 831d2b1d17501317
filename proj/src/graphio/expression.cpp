#include "gtgrn/graphio/expression.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"

namespace gtgrn::graphio {

void ExpressionMatrix::validate() const {
  if (gene_names.size() != values.rows() || sample_names.size() != values.cols()) {
    throw ContractError("ExpressionMatrix: " + std::to_string(gene_names.size()) + " genes x " +
                        std::to_string(sample_names.size()) + " samples named for matrix " +
                        values.shape_string());
  }
  auto check_unique = [](const std::vector<std::string>& names, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names)
      if (!seen.insert(n).second) {
        throw ContractError(std::string("ExpressionMatrix: duplicate ") + what + " '" + n + "'");
      }
  };
  check_unique(gene_names, "gene");
  check_unique(sample_names, "sample");
}

ExpressionMatrix ExpressionMatrix::select_genes(const std::vector<std::size_t>& rows) const {
  ExpressionMatrix out;
  out.sample_names = sample_names;
  out.values = numcore::Matrix(rows.size(), samples());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.gene_names.push_back(gene_names.at(rows[r]));
    std::copy_n(values.row(rows[r]).data(), samples(), out.values.row(r).data());
  }
  return out;
}

ExpressionMatrix parse_expression_tsv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  ExpressionMatrix x;
  std::vector<double> data;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    // Header is tab-separated so a blank leading cell is preserved.
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (!header_seen) {
      if (cells.size() < 2) throw ParseError(where + ": header needs at least one sample");
      if (!cells[0].empty() && cells[0] != "gene") {
        throw ParseError(where + ": first header cell must be blank or 'gene'");
      }
      x.sample_names.assign(cells.begin() + 1, cells.end());
      header_seen = true;
      continue;
    }
    if (cells.size() != x.sample_names.size() + 1) {
      throw ParseError(where + ": expected " + std::to_string(x.sample_names.size() + 1) +
                       " fields, found " + std::to_string(cells.size()));
    }
    x.gene_names.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) data.push_back(parse_double(cells[c], where));
  }
  if (!header_seen) throw ParseError(source + ": empty expression file");
  x.values = numcore::Matrix(x.gene_names.size(), x.sample_names.size(), std::move(data));
  x.validate();
  return x;
}

ExpressionMatrix load_expression_tsv(const std::string& path) {
  return parse_expression_tsv(read_text_file(path), path);
}

std::string format_expression_tsv(const ExpressionMatrix& x) {
  std::string out = "gene";
  for (const auto& s : x.sample_names) {
    out += '\t';
    out += s;
  }
  out += '\n';
  for (std::size_t g = 0; g < x.genes(); ++g) {
    out += x.gene_names[g];
    for (double v : x.values.row(g)) {
      out += '\t';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void save_expression_tsv(const ExpressionMatrix& x, const std::string& path) {
  write_text_atomic(path, format_expression_tsv(x));
}

namespace {

double sample_variance(std::span<const double> row) {
  const double m = static_cast<double>(row.size());
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : row) ss += (v - mean) * (v - mean);
  return ss / (m - 1.0);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

PreprocessResult preprocess_expression(const ExpressionMatrix& x,
                                       const PreprocessOptions& options) {
  x.validate();
  for (double v : x.values.values())
    if (v < 0.0 || !std::isfinite(v)) {
      throw ContractError("preprocess_expression: raw values must be finite and non-negative");
    }
  PreprocessResult result;
  PreprocessReport& report = result.report;
  report.input_genes = x.genes();
  const std::size_t m = x.samples();

  std::vector<std::size_t> stage1;
  for (std::size_t g = 0; g < x.genes(); ++g) {
    std::size_t nonzero = 0;
    for (double v : x.values.row(g)) nonzero += v != 0.0;
    const double frac = m ? static_cast<double>(nonzero) / static_cast<double>(m) : 0.0;
    if (frac < options.min_cell_frac || nonzero == 0) {
      report.dropped_low_expression.push_back(x.gene_names[g]);
    } else {
      stage1.push_back(g);
    }
  }

  std::vector<std::size_t> stage2;
  if (options.variance_test && !stage1.empty()) {
    if (m < 2) throw ContractError("preprocess_expression: variance test needs >= 2 samples");
    std::vector<double> variances;
    for (std::size_t g : stage1) variances.push_back(sample_variance(x.values.row(g)));
    report.median_variance = median(variances);
    report.degrees_of_freedom = m - 1;
    const double df = static_cast<double>(m - 1);
    const double tested = static_cast<double>(stage1.size());
    for (std::size_t k = 0; k < stage1.size(); ++k) {
      VarianceTestRow row;
      row.gene = x.gene_names[stage1[k]];
      row.variance = variances[k];
      if (report.median_variance > 0.0) {
        row.statistic = df * variances[k] / report.median_variance;
        row.p_value = boost::math::gamma_q(df / 2.0, row.statistic / 2.0);
      } else {
        // Degenerate null: a gene with any spread is infinitely significant.
        row.statistic = variances[k] > 0.0 ? INFINITY : 0.0;
        row.p_value = variances[k] > 0.0 ? 0.0 : 1.0;
      }
      row.p_adjusted = std::min(1.0, row.p_value * tested);
      row.kept = row.p_adjusted < options.alpha;
      if (row.kept) {
        stage2.push_back(stage1[k]);
      } else {
        report.dropped_variance.push_back(row.gene);
      }
      report.variance_tests.push_back(std::move(row));
    }
  } else {
    stage2 = stage1;
  }

  if (stage2.empty()) throw ContractError("preprocess_expression: no genes survive filtering");
  result.matrix = x.select_genes(stage2);
  for (double& v : result.matrix.values.values()) v = std::log1p(v);
  report.output_genes = stage2.size();
  return result;
}

}  // namespace gtgrn::graphio
