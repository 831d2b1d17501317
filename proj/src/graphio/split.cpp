#include "gtgrn/graphio/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gtgrn/errors.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::graphio {

namespace {

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

// Uniform sample of `count` distinct non-edges in draw order.
std::vector<Edge> sample_non_edges(const GeneGraph& g, std::size_t count, numcore::Rng& rng) {
  const std::size_t n = g.n();
  const std::size_t pairs = n < 2 ? 0 : n * (n - 1) / 2;
  const std::size_t available = pairs - g.edge_count();
  if (count > available) {
    throw ContractError("split_edges: " + std::to_string(count) + " negatives requested but only " +
                        std::to_string(available) + " non-edges exist");
  }
  std::vector<Edge> out;
  out.reserve(count);
  if (count * 3 > available) {
    // Dense regime: enumerate and partially shuffle.
    std::vector<Edge> pool;
    pool.reserve(available);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (!g.has_edge(i, j)) pool.push_back({i, j});
    for (std::size_t k = 0; k < count; ++k) {
      std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
      out.push_back(pool[k]);
    }
    return out;
  }
  std::set<Edge> taken;
  while (out.size() < count) {
    const std::size_t i = rng.below(n);
    const std::size_t j = rng.below(n);
    if (i == j || g.has_edge(i, j)) continue;
    const Edge e = make_edge(i, j);
    if (taken.insert(e).second) out.push_back(e);
  }
  return out;
}

}  // namespace

EdgeSplit split_edges(const GeneGraph& g, const SplitFractions& fractions, double neg_ratio,
                      std::uint64_t seed) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ContractError("split_edges: fractions must be non-negative and sum to 1");
  }
  if (neg_ratio < 0.0) throw ContractError("split_edges: neg_ratio must be >= 0");
  numcore::Rng rng(seed);
  std::vector<Edge> edges = g.edges();
  rng.shuffle(std::span<Edge>(edges));

  const std::size_t e = edges.size();
  const std::size_t n_train = std::min(e, rounded(fractions.train * static_cast<double>(e)));
  const std::size_t n_val = std::min(e - n_train, rounded(fractions.val * static_cast<double>(e)));

  EdgeSplit split;
  split.seed = seed;
  split.neg_ratio = neg_ratio;
  auto begin = edges.begin();
  split.train_pos.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  split.val_pos.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                       begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test_pos.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());

  const std::size_t k_train = rounded(neg_ratio * static_cast<double>(split.train_pos.size()));
  const std::size_t k_val = rounded(neg_ratio * static_cast<double>(split.val_pos.size()));
  const std::size_t k_test = rounded(neg_ratio * static_cast<double>(split.test_pos.size()));
  std::vector<Edge> negs = sample_non_edges(g, k_train + k_val + k_test, rng);
  auto nb = negs.begin();
  split.train_neg.assign(nb, nb + static_cast<std::ptrdiff_t>(k_train));
  split.val_neg.assign(nb + static_cast<std::ptrdiff_t>(k_train),
                       nb + static_cast<std::ptrdiff_t>(k_train + k_val));
  split.test_neg.assign(nb + static_cast<std::ptrdiff_t>(k_train + k_val), negs.end());
  return split;
}

}  // namespace gtgrn::graphio
