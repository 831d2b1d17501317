#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gtgrn/ensemble/ensemble.hpp"
#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/synth.hpp"
#include "gtgrn/numcore/random.hpp"

using namespace gtgrn;
using namespace gtgrn::ensemble;
using numcore::Matrix;

namespace {

ExpressionMatrix make_expr(const Matrix& values) {
  ExpressionMatrix x;
  x.gene_names = graphio::synthetic_gene_names(values.rows());
  for (std::size_t s = 0; s < values.cols(); ++s) x.sample_names.push_back("s" + std::to_string(s));
  x.values = values;
  return x;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  numcore::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double score_of(const graphio::ScoredEdgeList& s, std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  for (const auto& e : s)
    if (e.i == i && e.j == j) return e.score;
  FAIL("pair not scored");
  return 0.0;
}

double textbook_corr(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sa += a[k];
    sb += b[k];
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - sa / n) * (b[k] - sb / n);
    saa += (a[k] - sa / n) * (a[k] - sa / n);
    sbb += (b[k] - sb / n) * (b[k] - sb / n);
  }
  const double cov = sab / (n - 1), va = saa / (n - 1), vb = sbb / (n - 1);
  return cov / std::sqrt(va * vb);
}

std::vector<double> counting_ranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

TEST_CASE("correlation: duplicated and negated genes score 1") {
  Matrix v = random_matrix(3, 20, 1);
  for (std::size_t s = 0; s < 20; ++s) {
    v(1, s) = v(0, s);
    v(2, s) = -v(0, s);
  }
  for (auto kind : {CorrelationKind::pearson, CorrelationKind::spearman}) {
    const auto s = infer_correlation(make_expr(v), kind);
    CHECK(score_of(s, 0, 1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(score_of(s, 0, 2) == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(infer_correlation(make_expr(random_matrix(3, 2, 1)), CorrelationKind::pearson),
                  ContractError);
}

TEST_CASE("correlation matches the covariance formula") {
  const Matrix v = random_matrix(10, 50, 2);
  const auto s = infer_correlation(make_expr(v), CorrelationKind::pearson);
  CHECK(s.size() == 45);
  for (const auto& e : s) CHECK(std::abs(e.score - std::abs(textbook_corr(v.row(e.i), v.row(e.j)))) < 1e-10);
}

TEST_CASE("spearman equals pearson over counted midranks") {
  numcore::Rng rng(3);
  Matrix v(6, 30);
  for (double& x : v.values()) x = static_cast<double>(rng.below(7));  // many ties
  const auto s = infer_correlation(make_expr(v), CorrelationKind::spearman);
  for (const auto& e : s) {
    const auto a = counting_ranks(v.row(e.i)), b = counting_ranks(v.row(e.j));
    CHECK(std::abs(e.score - std::abs(textbook_corr(a, b))) < 1e-10);
  }
}

TEST_CASE("zero-variance gene scores 0 against every partner") {
  Matrix v = random_matrix(4, 12, 4);
  for (std::size_t s = 0; s < 12; ++s) v(2, s) = 3.5;
  for (const auto& e : infer_correlation(make_expr(v), CorrelationKind::pearson))
    if (e.i == 2 || e.j == 2) CHECK(e.score == 0.0);
  for (const auto& e : infer_mi_clr(make_expr(v)))
    if (e.i == 2 || e.j == 2) CHECK(std::isfinite(e.score));
}

TEST_CASE("mutual information on a hand-built histogram") {
  const Matrix v{{0, 0, 0, 0, 1, 1, 1, 1}, {0, 0, 1, 1, 0, 0, 1, 1}, {0, 0, 0, 1, 1, 1, 1, 1}};
  const Matrix mi = mutual_information_matrix(v, 2);
  CHECK(std::abs(mi(0, 1)) < 1e-15);
  // joint (a, c) counts: 00:3 01:1 10:0 11:4
  const double expected = 0.375 * std::log(0.375 / (0.5 * 0.375)) + 0.125 * std::log(0.125 / (0.5 * 0.625)) +
                          0.5 * std::log(0.5 / (0.5 * 0.625));
  CHECK(mi(0, 2) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(mi(2, 0) == mi(0, 2));
  CHECK(mi(0, 0) == doctest::Approx(std::log(2.0)));
  // b vs c: 00:2 01:2 10:1 11:3
  const double bc = 0.25 * std::log(0.25 / (0.5 * 0.375)) + 0.25 * std::log(0.25 / (0.5 * 0.625)) +
                    0.125 * std::log(0.125 / (0.5 * 0.375)) + 0.375 * std::log(0.375 / (0.5 * 0.625));
  CHECK(mi(1, 2) == doctest::Approx(bc).epsilon(1e-14));
}

TEST_CASE("mutual information of a copy equals the binned entropy") {
  Matrix v = random_matrix(5, 64, 5);
  for (std::size_t s = 0; s < 64; ++s) v(3, s) = v(1, s);
  const Matrix mi = mutual_information_matrix(v);
  CHECK(mi(1, 3) == doctest::Approx(mi(1, 1)).epsilon(1e-12));
  for (std::size_t j = 0; j < 5; ++j)
    if (j != 1) CHECK(mi(1, j) <= mi(1, 3) + 1e-12);
}

TEST_CASE("mutual information of independent genes vanishes up to binning bias") {
  numcore::Rng rng(6);
  const std::size_t m = 2000;
  Matrix v(2, m);
  for (double& x : v.values()) x = rng.uniform();
  // A coarse fixed grid lets the estimate approach its limit of zero.
  CHECK(mutual_information_matrix(v, 6)(0, 1) <= 0.05);
  // With ceil(sqrt(m)) = 45 bins the plug-in estimate sits near its
  // first-order bias (B - 1)^2 / (2m) instead.
  const double bias = 44.0 * 44.0 / (2.0 * m);
  const double fine = mutual_information_matrix(v)(0, 1);
  CHECK(fine == doctest::Approx(bias).epsilon(0.25));
}

TEST_CASE("CLR scores follow the z-score formula") {
  const Matrix v = random_matrix(6, 40, 7);
  const Matrix mi = mutual_information_matrix(v);
  const auto s = infer_mi_clr(make_expr(v));
  auto z = [&](std::size_t i, std::size_t j) {
    std::vector<double> others;
    for (std::size_t k = 0; k < 6; ++k)
      if (k != i) others.push_back(mi(i, k));
    const double mean = std::accumulate(others.begin(), others.end(), 0.0) / 5.0;
    double var = 0;
    for (double o : others) var += (o - mean) * (o - mean) / 5.0;
    return std::max(0.0, (mi(i, j) - mean) / std::sqrt(var));
  };
  for (const auto& e : s)
    CHECK(e.score == doctest::Approx(std::hypot(z(e.i, e.j), z(e.j, e.i))).epsilon(1e-12));
  CHECK_THROWS_AS(infer_mi_clr(make_expr(random_matrix(3, 7, 1))), ContractError);
}

TEST_CASE("partial correlation: orthogonal genes, chains, and the 2-gene case") {
  const Matrix ortho{{1, 1, -1, -1}, {1, -1, 1, -1}, {1, -1, -1, 1}};
  for (const auto& e : infer_partial_correlation(make_expr(ortho))) CHECK(std::abs(e.score) < 1e-12);

  numcore::Rng rng(8);
  const std::size_t m = 4000;
  Matrix chain(3, m);
  for (std::size_t s = 0; s < m; ++s) {
    chain(0, s) = rng.normal();
    chain(1, s) = chain(0, s) + 0.5 * rng.normal();
    chain(2, s) = chain(1, s) + 0.5 * rng.normal();
  }
  const auto pc = infer_partial_correlation(make_expr(chain));
  const auto rc = infer_correlation(make_expr(chain), CorrelationKind::pearson);
  CHECK(score_of(pc, 0, 2) < 0.05);
  CHECK(score_of(pc, 0, 2) < score_of(rc, 0, 2));

  const Matrix two = random_matrix(2, 30, 9);
  const double r = textbook_corr(two.row(0), two.row(1));
  const auto p2 = infer_partial_correlation(make_expr(two));
  CHECK(std::abs(p2[0].score - std::abs(r)) < 1e-2);
  CHECK(p2[0].score == doctest::Approx(std::abs(r) / (1.0 + 1e-3)).epsilon(1e-12));
}

TEST_CASE("binarize_topk: empty, ties, and the sort oracle") {
  const auto names = graphio::synthetic_gene_names(5);
  graphio::ScoredEdgeList flat;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) flat.push_back({i, j, 0.5});
  CHECK(binarize_topk(flat, 0, names).edge_count() == 0);
  const auto g = binarize_topk(flat, 3, names);
  CHECK(g.edges() == std::vector<graphio::Edge>{{0, 1}, {0, 2}, {0, 3}});
  CHECK_THROWS_AS(binarize_topk(flat, 11, names), ContractError);

  numcore::Rng rng(10);
  for (auto& e : flat) e.score = rng.uniform();
  auto sorted = flat;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.score > b.score; });
  for (std::size_t k = 0; k <= flat.size(); ++k) {
    const auto top = binarize_topk(flat, k, names);
    REQUIRE(top.edge_count() == k);
    for (std::size_t t = 0; t < k; ++t) CHECK(top.has_edge(sorted[t].i, sorted[t].j));
  }
}

TEST_CASE("property: every method is permutation-equivariant") {
  numcore::Rng rng(11);
  const Matrix v = random_matrix(7, 24, 12);
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  Matrix pv(7, 24);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t s = 0; s < 24; ++s) pv(i, s) = v(perm[i], s);
  for (const char* tag : {"pearson", "spearman", "mi_clr", "partial_correlation"}) {
    const auto a = infer_by_tag(make_expr(v), tag);
    const auto b = infer_by_tag(make_expr(pv), tag);
    for (const auto& e : b) CHECK(e.score == doctest::Approx(score_of(a, perm[e.i], perm[e.j])).epsilon(1e-10));
  }
}

TEST_CASE("property: shift invariance and affine invariance of MI") {
  const Matrix v = random_matrix(6, 32, 13);
  Matrix shifted = v, global = v, affine = v;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t s = 0; s < 32; ++s) {
      shifted(i, s) += 10.0 * static_cast<double>(i);
      global(i, s) += 7.0;
      affine(i, s) = 3.0 * v(i, s) + static_cast<double>(i);
    }
  for (const char* tag : {"pearson", "partial_correlation"}) {
    const auto a = infer_by_tag(make_expr(v), tag);
    for (const Matrix* w : {&shifted, &global}) {
      const auto b = infer_by_tag(make_expr(*w), tag);
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k].score == doctest::Approx(a[k].score).epsilon(1e-9));
    }
  }
  const Matrix ma = mutual_information_matrix(v), mb = mutual_information_matrix(affine);
  for (std::size_t k = 0; k < ma.size(); ++k) CHECK(mb.values()[k] == doctest::Approx(ma.values()[k]).epsilon(1e-12));
}

TEST_CASE("noiseless simulation: adjacent pairs outrank the median non-adjacent pair") {
  // Forest of small regulatory trees; each tree has one exogenous root.
  std::vector<graphio::Edge> edges;
  for (std::size_t c = 0; c < 15; ++c) {
    const std::size_t b = 4 * c;
    edges.push_back({b, b + 1});
    edges.push_back({b + 1, b + 2});
    if (c % 2) edges.push_back({b, b + 3});
  }
  const graphio::GeneGraph g(graphio::synthetic_gene_names(60), edges);
  const auto x = graphio::simulate_expression(g, 200, 0.0, 15);
  const auto s = infer_correlation(x, CorrelationKind::pearson);
  std::vector<double> non;
  for (const auto& e : s)
    if (!g.has_edge(e.i, e.j)) non.push_back(e.score);
  std::nth_element(non.begin(), non.begin() + static_cast<std::ptrdiff_t>(non.size() / 2), non.end());
  const double median = non[non.size() / 2];
  for (const auto& e : s)
    if (g.has_edge(e.i, e.j)) CHECK(e.score > median);
}

TEST_CASE("infer_ensemble builds equal-budget networks") {
  const auto g = graphio::synth_scale_free_grn(30, 2, 16);
  const auto x = graphio::simulate_expression(g, 60, 0.25, 17);
  EnsembleOptions opt;
  const auto nets = infer_ensemble(x, opt);
  REQUIRE(nets.size() == 3);
  for (const auto& n : nets) {
    CHECK(n.binarized.edge_count() == 90);
    CHECK(n.scores.size() == 435);
  }
  opt.parallel = true;
  const auto again = infer_ensemble(x, opt);
  for (std::size_t k = 0; k < 3; ++k) CHECK(again[k].binarized.edges() == nets[k].binarized.edges());
  CHECK_THROWS_AS(infer_by_tag(x, "genie3"), ContractError);
}
