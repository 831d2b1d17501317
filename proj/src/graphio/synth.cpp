#include "gtgrn/graphio/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "gtgrn/errors.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::graphio {

std::vector<std::string> synthetic_gene_names(std::size_t n) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n ? n - 1 : 0).size());
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string digits = std::to_string(i);
    names.push_back("G" + std::string(width - digits.size(), '0') + digits);
  }
  return names;
}

GeneGraph synth_scale_free_grn(std::size_t n, std::size_t m_attach, std::uint64_t seed) {
  if (m_attach < 1 || n <= m_attach) {
    throw ContractError("synth_scale_free_grn: need n > m_attach >= 1 (n=" + std::to_string(n) +
                        ", m_attach=" + std::to_string(m_attach) + ")");
  }
  numcore::Rng rng(seed);
  std::vector<Edge> edges;
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < m_attach; ++i)
    for (std::size_t j = i + 1; j < m_attach; ++j) {
      edges.push_back({i, j});
      degree[i] += 1.0;
      degree[j] += 1.0;
    }
  std::vector<char> chosen(n, 0);
  std::vector<std::size_t> targets;
  for (std::size_t t = m_attach; t < n; ++t) {
    targets.clear();
    for (std::size_t pick = 0; pick < m_attach; ++pick) {
      double total = 0.0;
      for (std::size_t u = 0; u < t; ++u)
        if (!chosen[u]) total += degree[u];
      std::size_t target = t;
      if (total <= 0.0) {
        std::size_t open = 0;
        for (std::size_t u = 0; u < t; ++u) open += !chosen[u];
        std::size_t k = rng.below(open);
        for (std::size_t u = 0; u < t; ++u) {
          if (chosen[u]) continue;
          if (k-- == 0) {
            target = u;
            break;
          }
        }
      } else {
        const double r = rng.uniform() * total;
        double acc = 0.0;
        for (std::size_t u = 0; u < t; ++u) {
          if (chosen[u] || degree[u] <= 0.0) continue;
          acc += degree[u];
          target = u;
          if (r < acc) break;
        }
      }
      chosen[target] = 1;
      targets.push_back(target);
    }
    for (std::size_t u : targets) {
      chosen[u] = 0;
      edges.push_back(make_edge(u, t));
      degree[u] += 1.0;
      degree[t] += 1.0;
    }
  }
  return GeneGraph(synthetic_gene_names(n), edges);
}

ExpressionMatrix simulate_expression(const GeneGraph& g, std::size_t samples, double noise_sd,
                                     std::uint64_t seed, const SimulationOptions& options) {
  if (samples < 2) throw ContractError("simulate_expression: need at least 2 samples");
  if (noise_sd < 0.0) throw ContractError("simulate_expression: noise_sd must be >= 0");
  const std::size_t n = g.n();
  numcore::Rng rng(seed);

  // Regulators of each gene with the per-edge weight, in canonical edge order.
  std::vector<std::vector<std::pair<std::size_t, double>>> regulators(n);
  for (const Edge& e : g.edges()) {
    const double magnitude = rng.uniform(options.weight_min, options.weight_max);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    regulators[e.second].emplace_back(e.first, sign * magnitude);
  }

  numcore::Matrix values(n, samples);
  std::vector<double> exogenous(n), noise(n), current(n), next(n);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      exogenous[i] = rng.normal();
      noise[i] = noise_sd * rng.normal();
    }
    current = exogenous;
    for (std::size_t round = 0; round < options.rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        if (regulators[i].empty()) {
          next[i] = exogenous[i];
          continue;
        }
        double acc = 0.0;
        for (const auto& [reg, w] : regulators[i]) acc += w * current[reg];
        next[i] = acc / static_cast<double>(regulators[i].size()) + noise[i];
      }
      std::swap(current, next);
    }
    for (std::size_t i = 0; i < n; ++i) values(i, s) = current[i];
  }
  double lowest = 0.0;
  if (!values.empty()) lowest = *std::min_element(values.values().begin(), values.values().end());
  for (double& v : values.values()) v -= lowest;

  ExpressionMatrix x;
  x.gene_names = g.gene_names();
  char buf[32];
  for (std::size_t s = 0; s < samples; ++s) {
    std::snprintf(buf, sizeof(buf), "S%04zu", s);
    x.sample_names.emplace_back(buf);
  }
  x.values = std::move(values);
  return x;
}

}  // namespace gtgrn::graphio
