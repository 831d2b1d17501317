#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtgrn/graphio/graph.hpp"

namespace gtgrn::eval {

struct RankingMetrics {
  double auroc = 0.0;
  double auprc = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie), via midranks.
/// Throws ContractError without at least one positive and one negative.
double auroc(std::span<const double> scores, std::span<const char> labels);

/// Average precision. Items are ranked by descending score; equal scores keep
/// their input order. Throws ContractError without positives.
double auprc(std::span<const double> scores, std::span<const char> labels);

RankingMetrics ranking_metrics(std::span<const double> scores, std::span<const char> labels);

/// Labels every scored pair by membership in `truth`, ranks ties by (i, j).
RankingMetrics full_reconstruction_eval(const graphio::ScoredEdgeList& scores, const graphio::GeneGraph& truth);

/// Component id per node (ids in order of the smallest member) and the count.
struct Components {
  std::vector<std::size_t> label;
  std::size_t count = 0;
};
Components connected_components(const graphio::GeneGraph& g);

struct NetworkStats {
  std::size_t max_degree = 0;
  /// Null when degrees along edges have zero variance (or no edges).
  std::optional<double> assortativity;
  std::size_t triangle_count = 0;
  /// Transitivity: 3 * triangles / connected triples (0 without triples).
  double clustering_coefficient = 0.0;
  /// Mean BFS distance over pairs of the largest component; null below 2 nodes.
  std::optional<double> characteristic_path_length;
  std::size_t largest_component = 0;
  std::size_t components = 0;
};

NetworkStats network_stats(const graphio::GeneGraph& g);

/// Pearson correlation of (max_degree, assortativity, triangles, clustering, CPL).
/// Throws ContractError when either side has a null field.
double stats_pcc(const NetworkStats& a, const NetworkStats& b);

/// "degree,count" rows ascending by degree, with a header line.
std::string degree_distribution_csv(const graphio::GeneGraph& g);
void save_degree_distribution(const graphio::GeneGraph& g, const std::string& path);
std::vector<std::pair<std::size_t, std::size_t>> parse_degree_distribution(const std::string& text);

}  // namespace gtgrn::eval
