#pragma once

// Planted instances shared by the unit tests and the acceptance binary.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "gtgrn/graphio/expression.hpp"
#include "gtgrn/graphio/synth.hpp"
#include "gtgrn/numcore/random.hpp"
#include "gtgrn/walks/walks.hpp"

namespace gtgrn::testing {

/// Walk corpus over two disjoint 6-cliques, r = 10 walks of L = 10 per gene.
inline walks::WalkCorpus planted_corpus(std::uint64_t seed) {
  std::vector<graphio::Edge> e;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = i + 1; j < 6; ++j) e.push_back({6 * c + i, 6 * c + j});
  const std::vector<graphio::GeneGraph> g{graphio::GeneGraph(graphio::synthetic_gene_names(12), e)};
  walks::WalkOptions wo;
  wo.length = 10;
  return walks::generate_walks(g, wo, seed);
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double d = 0, x = 0, y = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d += a[k] * b[k];
    x += a[k] * a[k];
    y += b[k] * b[k];
  }
  return d / std::sqrt(x * y);
}

/// Mean cosine of embedding rows within and across the two planted cliques.
struct CliqueCosines {
  double intra = 0.0;
  double inter = 0.0;
};

inline CliqueCosines clique_cosines(const numcore::Matrix& xi) {
  CliqueCosines out;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = i + 1; j < 12; ++j) {
      const double c = cosine(xi.row(i), xi.row(j));
      if (i / 6 == j / 6) {
        out.intra += c;
        ++ni;
      } else {
        out.inter += c;
        ++nx;
      }
    }
  out.intra /= ni;
  out.inter /= nx;
  return out;
}

/// Numerical KL(q || p) for q = N(mu, sigma^2), p = N(0, 1).
inline double integrated_kl(double mu, double sigma) {
  auto integrand = [&](double x) {
    const double zq = (x - mu) / sigma;
    const double log_q = -0.5 * zq * zq - std::log(sigma) - 0.5 * std::log(2 * M_PI);
    const double log_p = -0.5 * x * x - 0.5 * std::log(2 * M_PI);
    return std::exp(log_q) * (log_q - log_p);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, mu - 14 * sigma, mu + 14 * sigma, 15,
                                                                       1e-14);
}

/// 200 x 50 rank-1 matrix u v^T + 0.1 noise, u signed by group (rows < 100 positive).
struct RankOne {
  graphio::ExpressionMatrix x;
  double variance = 0;
};

inline RankOne rank_one_task() {
  numcore::Rng rng(1);
  const std::size_t n = 200, m = 50;
  std::vector<double> u(n), v(m);
  for (std::size_t i = 0; i < n; ++i) u[i] = (i < n / 2 ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
  for (double& s : v) s = rng.normal();
  RankOne t;
  t.x.values = numcore::Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t.x.values(i, j) = u[i] * v[j] + 0.1 * rng.normal();
  const auto vals = t.x.values.values();
  const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  for (double a : vals) t.variance += (a - mean) * (a - mean) / static_cast<double>(vals.size());
  return t;
}

/// Element-wise mean squared error of two equally shaped matrices.
inline double mean_squared_error(const numcore::Matrix& a, const numcore::Matrix& b) {
  double mse = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a.values()[k] - b.values()[k];
    mse += d * d / static_cast<double>(a.size());
  }
  return mse;
}

}  // namespace gtgrn::testing
