#include "gtgrn/graphio/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"

namespace gtgrn::graphio {

GeneGraph::GeneGraph(std::vector<std::string> gene_names, std::span<const Edge> edges)
    : names_(std::move(gene_names)) {
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw ContractError("GeneGraph: duplicate gene name '" + names_[i] + "'");
    }
  }
  edges_.reserve(edges.size());
  for (const Edge& e : edges) {
    if (e.first == e.second) {
      throw ContractError("GeneGraph: self-loop on node " + std::to_string(e.first));
    }
    if (e.first >= names_.size() || e.second >= names_.size()) {
      throw ContractError("GeneGraph: edge (" + std::to_string(e.first) + ", " +
                          std::to_string(e.second) + ") out of range for " +
                          std::to_string(names_.size()) + " nodes");
    }
    edges_.push_back(make_edge(e.first, e.second));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  std::vector<std::size_t> deg(names_.size(), 0);
  for (const Edge& e : edges_) {
    ++deg[e.first];
    ++deg[e.second];
  }
  adj_offsets_.assign(names_.size() + 1, 0);
  for (std::size_t i = 0; i < names_.size(); ++i) adj_offsets_[i + 1] = adj_offsets_[i] + deg[i];
  adj_.assign(adj_offsets_.back(), 0);
  std::vector<std::size_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (const Edge& e : edges_) {
    adj_[fill[e.first]++] = e.second;
    adj_[fill[e.second]++] = e.first;
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    std::sort(adj_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i]),
              adj_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i + 1]));
  }
}

std::optional<std::size_t> GeneGraph::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool GeneGraph::has_edge(std::size_t i, std::size_t j) const {
  if (i >= n() || j >= n() || i == j) return false;
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::span<const std::size_t> GeneGraph::neighbors(std::size_t i) const {
  if (i >= n()) throw ContractError("GeneGraph: node " + std::to_string(i) + " out of range");
  return {adj_.data() + adj_offsets_[i], adj_offsets_[i + 1] - adj_offsets_[i]};
}

numcore::Matrix GeneGraph::adjacency() const {
  numcore::Matrix a(n(), n());
  for (const Edge& e : edges_) a(e.first, e.second) = a(e.second, e.first) = 1.0;
  return a;
}

std::vector<double> GeneGraph::degrees() const {
  std::vector<double> d(n());
  for (std::size_t i = 0; i < n(); ++i) d[i] = static_cast<double>(degree(i));
  return d;
}

GeneGraph GeneGraph::with_edges(std::span<const Edge> edges) const {
  return GeneGraph(names_, edges);
}

GeneGraph reindex(const GeneGraph& g, const std::vector<std::string>& names,
                  std::size_t* dropped_edges) {
  GeneGraph target(names, {});
  std::vector<Edge> edges;
  std::size_t dropped = 0;
  for (const Edge& e : g.edges()) {
    auto a = target.index_of(g.gene_name(e.first));
    auto b = target.index_of(g.gene_name(e.second));
    if (a && b) {
      edges.push_back(make_edge(*a, *b));
    } else {
      ++dropped;
    }
  }
  if (dropped_edges) *dropped_edges = dropped;
  return GeneGraph(names, edges);
}

LoadedGraph parse_edge_list(std::string_view text, bool directed_input, std::string_view source) {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::size_t> index;
  auto intern = [&](std::string_view name) {
    auto [it, inserted] = index.emplace(std::string(name), names.size());
    if (inserted) names.emplace_back(name);
    return it->second;
  };

  LoadReport report;
  report.symmetrized = directed_input;
  std::set<std::pair<std::size_t, std::size_t>> directed_seen;
  std::set<Edge> kept;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.size() < 2) {
      throw ParseError(std::string(source) + ":" + std::to_string(line_no) +
                       ": expected two gene names");
    }
    ++report.lines_read;
    const std::size_t a = intern(fields[0]);
    const std::size_t b = intern(fields[1]);
    if (a == b) {
      ++report.self_loops_dropped;
      continue;
    }
    const Edge e = make_edge(a, b);
    if (directed_input) {
      if (!directed_seen.emplace(a, b).second) {
        ++report.duplicates_dropped;
        continue;
      }
      if (!kept.insert(e).second) ++report.reciprocal_merged;
    } else if (!kept.insert(e).second) {
      ++report.duplicates_dropped;
    }
  }
  std::vector<Edge> edges(kept.begin(), kept.end());
  report.edges_kept = edges.size();
  return LoadedGraph{GeneGraph(std::move(names), edges), report};
}

LoadedGraph load_edge_list(const std::string& path, bool directed_input) {
  return parse_edge_list(read_text_file(path), directed_input, path);
}

std::string format_edge_list(const GeneGraph& g) {
  std::string out;
  for (const Edge& e : g.edges()) {
    out += g.gene_name(e.first);
    out += '\t';
    out += g.gene_name(e.second);
    out += '\n';
  }
  return out;
}

void save_edge_list(const GeneGraph& g, const std::string& path) {
  write_text_atomic(path, format_edge_list(g));
}

std::string format_scores(const ScoredEdgeList& scores, const std::vector<std::string>& names) {
  std::string out = "gene_i\tgene_j\tscore\n";
  for (const ScoredEdge& s : scores) {
    out += names.at(s.i);
    out += '\t';
    out += names.at(s.j);
    out += '\t';
    out += format_double(s.score);
    out += '\n';
  }
  return out;
}

void save_scores(const ScoredEdgeList& scores, const std::vector<std::string>& names,
                 const std::string& path) {
  write_text_atomic(path, format_scores(scores, names));
}

ScoredEdgeList load_scores(const std::string& path, const GeneGraph& genes) {
  const std::string text = read_text_file(path);
  ScoredEdgeList out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto f = split_fields(line);
    if (f.empty() || f[0].front() == '#') continue;
    if (line_no == 1 && f[0] == "gene_i") continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() < 3) throw ParseError(where + ": expected gene_i gene_j score");
    auto a = genes.index_of(f[0]);
    auto b = genes.index_of(f[1]);
    if (!a || !b) throw ParseError(where + ": unknown gene");
    if (*a == *b) throw ParseError(where + ": self pair");
    const Edge e = make_edge(*a, *b);
    out.push_back(ScoredEdge{e.first, e.second, parse_double(f[2], where)});
  }
  return out;
}

}  // namespace gtgrn::graphio
