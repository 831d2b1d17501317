#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::graphio {

/// Unordered gene pair stored canonically with first < second.
struct Edge {
  std::size_t first = 0;
  std::size_t second = 0;

  bool operator==(const Edge&) const = default;
  auto operator<=>(const Edge&) const = default;
};

/// Canonicalizes (i, j) to i < j. Caller guarantees i != j.
inline Edge make_edge(std::size_t i, std::size_t j) { return i < j ? Edge{i, j} : Edge{j, i}; }

/// Undirected simple graph over named genes. Immutable after construction.
class GeneGraph {
 public:
  GeneGraph() = default;
  /// Duplicate edges collapse; self-loops, out-of-range indices and repeated
  /// gene names throw ContractError.
  GeneGraph(std::vector<std::string> gene_names, std::span<const Edge> edges);

  std::size_t n() const noexcept { return names_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<std::string>& gene_names() const noexcept { return names_; }
  const std::string& gene_name(std::size_t i) const { return names_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Canonical edges in ascending (first, second) order.
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool has_edge(std::size_t i, std::size_t j) const;
  /// Sorted neighbor indices.
  std::span<const std::size_t> neighbors(std::size_t i) const;
  std::size_t degree(std::size_t i) const { return neighbors(i).size(); }

  /// Symmetric 0/1 adjacency matrix.
  numcore::Matrix adjacency() const;
  /// Diagonal of the degree matrix.
  std::vector<double> degrees() const;

  /// Same genes, different edge set.
  GeneGraph with_edges(std::span<const Edge> edges) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> adj_offsets_{0};
  std::vector<std::size_t> adj_;
};

/// Re-expresses `g` over the gene ordering `names`. Edges touching genes
/// absent from `names` are dropped; their count goes to `dropped_edges`.
GeneGraph reindex(const GeneGraph& g, const std::vector<std::string>& names,
                  std::size_t* dropped_edges = nullptr);

/// One scored gene pair, canonical i < j.
struct ScoredEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double score = 0.0;
};

using ScoredEdgeList = std::vector<ScoredEdge>;

struct LoadReport {
  std::size_t lines_read = 0;
  std::size_t edges_kept = 0;
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_dropped = 0;
  /// Directed input only: reverse-direction pairs merged into an existing edge.
  std::size_t reciprocal_merged = 0;
  bool symmetrized = false;
};

struct LoadedGraph {
  GeneGraph graph;
  LoadReport report;
};

/// Reads "geneA geneB" lines (tab or space separated, '#' comments ignored).
/// Genes are indexed in order of first appearance. Throws IoError or
/// ParseError (with the line number).
LoadedGraph load_edge_list(const std::string& path, bool directed_input);
/// Parses edge-list text; `source` is used in error messages.
LoadedGraph parse_edge_list(std::string_view text, bool directed_input,
                            std::string_view source = "<memory>");
/// Writes one "geneA\tgeneB" line per canonical edge.
std::string format_edge_list(const GeneGraph& g);
void save_edge_list(const GeneGraph& g, const std::string& path);

/// "gene_i\tgene_j\tscore" lines with round-trip precision.
std::string format_scores(const ScoredEdgeList& scores, const std::vector<std::string>& names);
void save_scores(const ScoredEdgeList& scores, const std::vector<std::string>& names,
                 const std::string& path);
/// Reads scores against a known gene ordering; pairs are canonicalized.
ScoredEdgeList load_scores(const std::string& path, const GeneGraph& genes);

}  // namespace gtgrn::graphio
