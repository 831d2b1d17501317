#include "gtgrn/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "gtgrn/errors.hpp"

namespace gtgrn::ensemble {

using numcore::Matrix;

namespace {

ScoredEdgeList upper_triangle(const Matrix& m, bool absolute) {
  ScoredEdgeList out;
  const std::size_t n = m.rows();
  out.reserve(n * (n - (n ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      // Average the two halves so roundoff never breaks symmetry.
      const double s = 0.5 * (m(i, j) + m(j, i));
      out.push_back({i, j, absolute ? std::abs(s) : s});
    }
  return out;
}

// Midranks (1-based) within one row.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b + 1 < order.size() && v[order[b + 1]] == v[order[a]]) ++b;
    const double rank = 0.5 * static_cast<double>(a + b) + 1.0;
    for (std::size_t k = a; k <= b; ++k) r[order[k]] = rank;
    a = b + 1;
  }
  return r;
}

// Inverse of a symmetric positive definite matrix via Cholesky.
Matrix spd_inverse(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw NumericError("partial correlation: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  // Invert L column by column, then A^-1 = L^-T L^-1.
  Matrix linv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    linv(c, c) = 1.0 / l(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = c; k < i; ++k) s -= l(i, k) * linv(k, c);
      linv(i, c) = s / l(i, i);
    }
  }
  return numcore::matmul_tn(linv, linv);
}

void require_samples(const ExpressionMatrix& x, std::size_t min, const char* what) {
  if (x.samples() < min) {
    throw ContractError(std::string(what) + ": need at least " + std::to_string(min) +
                        " samples, got " + std::to_string(x.samples()));
  }
}

}  // namespace

Matrix correlation_matrix(const Matrix& values, CorrelationKind kind) {
  const std::size_t n = values.rows(), m = values.cols();
  Matrix z(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(values.row(i).begin(), values.row(i).end());
    if (kind == CorrelationKind::spearman) row = midranks(row);
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(m);
    double ss = 0.0;
    for (double& v : row) {
      v -= mean;
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    // Tiny spread relative to the level behaves like a constant gene.
    if (!(norm > 1e-12 * std::max(1.0, std::abs(mean)) * std::sqrt(static_cast<double>(m)))) continue;
    for (std::size_t s = 0; s < m; ++s) z(i, s) = row[s] / norm;
  }
  Matrix c = numcore::matmul_nt(z, z);
  for (double& v : c.values()) v = std::clamp(v, -1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) c(i, i) = 1.0;
  return c;
}

ScoredEdgeList infer_correlation(const ExpressionMatrix& x, CorrelationKind kind) {
  require_samples(x, 3, "infer_correlation");
  return upper_triangle(correlation_matrix(x.values, kind), true);
}

Matrix mutual_information_matrix(const Matrix& values, std::size_t bins) {
  const std::size_t n = values.rows(), m = values.cols();
  if (bins == 0) bins = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  bins = std::max<std::size_t>(bins, 1);
  std::vector<std::vector<std::size_t>> code(n, std::vector<std::size_t>(m, 0));
  std::vector<std::vector<double>> marginal(n, std::vector<double>(bins, 0.0));
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = values.row(i);
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    const double width = *hi - *lo;
    for (std::size_t s = 0; s < m; ++s) {
      std::size_t b = 0;
      if (width > 0.0) {
        b = static_cast<std::size_t>((row[s] - *lo) / width * static_cast<double>(bins));
        b = std::min(b, bins - 1);
      }
      code[i][s] = b;
      marginal[i][b] += inv_m;
    }
  }
  Matrix mi(n, n);
  std::vector<double> joint(bins * bins);
  for (std::size_t i = 0; i < n; ++i) {
    double h = 0.0;
    for (double p : marginal[i])
      if (p > 0.0) h -= p * std::log(p);
    mi(i, i) = h;
    for (std::size_t j = i + 1; j < n; ++j) {
      std::fill(joint.begin(), joint.end(), 0.0);
      for (std::size_t s = 0; s < m; ++s) joint[code[i][s] * bins + code[j][s]] += inv_m;
      double acc = 0.0;
      for (std::size_t a = 0; a < bins; ++a)
        for (std::size_t b = 0; b < bins; ++b) {
          const double p = joint[a * bins + b];
          if (p > 0.0) acc += p * std::log(p / (marginal[i][a] * marginal[j][b]));
        }
      mi(i, j) = mi(j, i) = std::max(0.0, acc);
    }
  }
  return mi;
}

ScoredEdgeList infer_mi_clr(const ExpressionMatrix& x, std::size_t bins) {
  require_samples(x, 8, "infer_mi_clr");
  const Matrix mi = mutual_information_matrix(x.values, bins);
  const std::size_t n = mi.rows();
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    double s = 0.0, ss = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) s += mi(i, j);
    mean[i] = s / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) ss += (mi(i, j) - mean[i]) * (mi(i, j) - mean[i]);
    sd[i] = std::sqrt(ss / static_cast<double>(n - 1));
  }
  auto zscore = [&](std::size_t i, double v) {
    return sd[i] > 0.0 ? std::max(0.0, (v - mean[i]) / sd[i]) : 0.0;
  };
  ScoredEdgeList out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double zi = zscore(i, mi(i, j)), zj = zscore(j, mi(i, j));
      out.push_back({i, j, std::sqrt(zi * zi + zj * zj)});
    }
  return out;
}

ScoredEdgeList infer_partial_correlation(const ExpressionMatrix& x, double ridge) {
  require_samples(x, 3, "infer_partial_correlation");
  if (!(ridge > 0.0)) throw ContractError("infer_partial_correlation: ridge must be > 0");
  Matrix r = correlation_matrix(x.values, CorrelationKind::pearson);
  for (std::size_t i = 0; i < r.rows(); ++i) r(i, i) += ridge;
  const Matrix omega = spd_inverse(r);
  const std::size_t n = omega.rows();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p(i, j) = i == j ? 1.0 : -omega(i, j) / std::sqrt(omega(i, i) * omega(j, j));
  return upper_triangle(p, true);
}

GeneGraph binarize_topk(const ScoredEdgeList& scores, std::size_t k,
                        const std::vector<std::string>& gene_names) {
  if (k > scores.size()) {
    throw ContractError("binarize_topk: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(scores.size()) + " scored pairs");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    const auto& x = scores[a];
    const auto& y = scores[b];
    if (x.score != y.score) return x.score > y.score;
    return std::make_pair(x.i, x.j) < std::make_pair(y.i, y.j);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<graphio::Edge> edges;
  edges.reserve(k);
  for (std::size_t t = 0; t < k; ++t) edges.push_back(graphio::make_edge(scores[order[t]].i, scores[order[t]].j));
  return GeneGraph(gene_names, edges);
}

ScoredEdgeList infer_by_tag(const ExpressionMatrix& x, const std::string& tag,
                            const EnsembleOptions& options) {
  if (tag == "pearson") return infer_correlation(x, CorrelationKind::pearson);
  if (tag == "spearman") return infer_correlation(x, CorrelationKind::spearman);
  if (tag == "mi_clr") return infer_mi_clr(x, options.mi_bins);
  if (tag == "partial_correlation") return infer_partial_correlation(x, options.ridge);
  throw ContractError("unknown inference method '" + tag + "'");
}

std::vector<InferredNetwork> infer_ensemble(const ExpressionMatrix& x, const EnsembleOptions& options) {
  if (options.methods.empty()) throw ContractError("infer_ensemble: no methods selected");
  x.validate();
  const std::size_t pairs = x.genes() * (x.genes() - (x.genes() ? 1 : 0)) / 2;
  const std::size_t k = std::min(pairs, options.edges_per_gene * x.genes());
  auto run = [&](const std::string& tag) {
    InferredNetwork net;
    net.method_tag = tag;
    net.scores = infer_by_tag(x, tag, options);
    net.binarized = binarize_topk(net.scores, k, x.gene_names);
    return net;
  };
  std::vector<InferredNetwork> out;
  if (options.parallel) {
    std::vector<std::future<InferredNetwork>> jobs;
    for (const auto& tag : options.methods) jobs.push_back(std::async(std::launch::async, run, tag));
    for (auto& j : jobs) out.push_back(j.get());
  } else {
    for (const auto& tag : options.methods) out.push_back(run(tag));
  }
  return out;
}

}  // namespace gtgrn::ensemble
