#include "gtgrn/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"

namespace gtgrn::eval {

namespace {

void check_sizes(std::span<const double> scores, std::span<const char> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  }
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError(std::string(what) + ": non-finite score");
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const char> labels) {
  check_sizes(scores, labels, "auroc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b + 1 < order.size() && scores[order[b + 1]] == scores[order[a]]) ++b;
    const double midrank = 0.5 * static_cast<double>(a + b) + 1.0;
    for (std::size_t k = a; k <= b; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    a = b + 1;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ContractError("auroc: need at least one positive and one negative (got " + std::to_string(n_pos) + " and " +
                        std::to_string(n_neg) + ")");
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auprc(std::span<const double> scores, std::span<const char> labels) {
  check_sizes(scores, labels, "auprc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto total_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](char c) { return c != 0; }));
  if (total_pos == 0) throw ContractError("auprc: no positives");
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k)
    if (labels[order[k]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  return ap / static_cast<double>(total_pos);
}

RankingMetrics ranking_metrics(std::span<const double> scores, std::span<const char> labels) {
  RankingMetrics m;
  m.auroc = auroc(scores, labels);
  m.auprc = auprc(scores, labels);
  m.n_pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](char c) { return c != 0; }));
  m.n_neg = labels.size() - m.n_pos;
  return m;
}

RankingMetrics full_reconstruction_eval(const graphio::ScoredEdgeList& scores, const graphio::GeneGraph& truth) {
  const std::size_t n = truth.n();
  if (scores.size() != n * (n - (n ? 1 : 0)) / 2) {
    throw ContractError("full_reconstruction_eval: " + std::to_string(scores.size()) + " scores do not cover the " +
                        std::to_string(n * (n - (n ? 1 : 0)) / 2) + " pairs of the reference network");
  }
  graphio::ScoredEdgeList sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return std::make_pair(a.i, a.j) < std::make_pair(b.i, b.j); });
  std::vector<double> s;
  std::vector<char> labels;
  s.reserve(sorted.size());
  labels.reserve(sorted.size());
  for (const auto& e : sorted) {
    if (e.i >= n || e.j >= n || e.i == e.j) throw ContractError("full_reconstruction_eval: pair outside the gene set");
    s.push_back(e.score);
    labels.push_back(truth.has_edge(e.i, e.j));
  }
  return ranking_metrics(s, labels);
}

Components connected_components(const graphio::GeneGraph& g) {
  Components c;
  constexpr std::size_t unset = static_cast<std::size_t>(-1);
  c.label.assign(g.n(), unset);
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < g.n(); ++s) {
    if (c.label[s] != unset) continue;
    c.label[s] = c.count;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : g.neighbors(u))
        if (c.label[v] == unset) {
          c.label[v] = c.count;
          stack.push_back(v);
        }
    }
    ++c.count;
  }
  return c;
}

NetworkStats network_stats(const graphio::GeneGraph& g) {
  if (g.n() < 2) throw ContractError("network_stats: need at least 2 nodes");
  NetworkStats st;
  const std::size_t n = g.n();
  for (std::size_t i = 0; i < n; ++i) st.max_degree = std::max(st.max_degree, g.degree(i));

  if (g.edge_count() > 0) {
    std::vector<double> a, b;
    for (const auto& e : g.edges()) {
      const double du = static_cast<double>(g.degree(e.first)), dv = static_cast<double>(g.degree(e.second));
      a.push_back(du);
      b.push_back(dv);
      a.push_back(dv);
      b.push_back(du);
    }
    const double r = pearson(a, b);
    if (std::isfinite(r)) st.assortativity = std::clamp(r, -1.0, 1.0);
  }

  for (const auto& e : g.edges()) {
    const auto nu = g.neighbors(e.first), nv = g.neighbors(e.second);
    // Count each triangle once at its largest vertex w > second.
    auto iu = std::upper_bound(nu.begin(), nu.end(), e.second);
    auto iv = std::upper_bound(nv.begin(), nv.end(), e.second);
    while (iu != nu.end() && iv != nv.end()) {
      if (*iu < *iv) {
        ++iu;
      } else if (*iv < *iu) {
        ++iv;
      } else {
        ++st.triangle_count;
        ++iu;
        ++iv;
      }
    }
  }
  double triples = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(g.degree(i));
    triples += d * (d - 1.0) / 2.0;
  }
  if (triples > 0.0) st.clustering_coefficient = 3.0 * static_cast<double>(st.triangle_count) / triples;

  const Components comp = connected_components(g);
  st.components = comp.count;
  std::vector<std::size_t> sizes(comp.count, 0);
  for (std::size_t l : comp.label) ++sizes[l];
  const std::size_t big = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  st.largest_component = sizes[big];
  if (st.largest_component >= 2) {
    double total = 0.0;
    std::vector<std::size_t> dist(n);
    std::queue<std::size_t> q;
    for (std::size_t s = 0; s < n; ++s) {
      if (comp.label[s] != big) continue;
      std::fill(dist.begin(), dist.end(), static_cast<std::size_t>(-1));
      dist[s] = 0;
      q.push(s);
      while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (std::size_t v : g.neighbors(u))
          if (dist[v] == static_cast<std::size_t>(-1)) {
            dist[v] = dist[u] + 1;
            if (v > s) total += static_cast<double>(dist[v]);
            q.push(v);
          }
      }
    }
    const double pairs = static_cast<double>(st.largest_component) * static_cast<double>(st.largest_component - 1) / 2.0;
    st.characteristic_path_length = total / pairs;
  }
  return st;
}

double stats_pcc(const NetworkStats& a, const NetworkStats& b) {
  if (!a.assortativity || !a.characteristic_path_length || !b.assortativity || !b.characteristic_path_length) {
    throw ContractError("stats_pcc: network statistics contain null fields");
  }
  const double va[] = {static_cast<double>(a.max_degree), *a.assortativity, static_cast<double>(a.triangle_count),
                       a.clustering_coefficient, *a.characteristic_path_length};
  const double vb[] = {static_cast<double>(b.max_degree), *b.assortativity, static_cast<double>(b.triangle_count),
                       b.clustering_coefficient, *b.characteristic_path_length};
  return pearson(va, vb);
}

std::string degree_distribution_csv(const graphio::GeneGraph& g) {
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t i = 0; i < g.n(); ++i) ++hist[g.degree(i)];
  std::string out = "degree,count\n";
  for (const auto& [d, c] : hist) out += std::to_string(d) + "," + std::to_string(c) + "\n";
  return out;
}

void save_degree_distribution(const graphio::GeneGraph& g, const std::string& path) {
  graphio::write_text_atomic(path, degree_distribution_csv(g));
}

std::vector<std::pair<std::size_t, std::size_t>> parse_degree_distribution(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty() || line == "degree,count") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("degree distribution line " + std::to_string(line_no) + ": expected 'degree,count'");
    try {
      rows.emplace_back(std::stoul(line.substr(0, comma)), std::stoul(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ParseError("degree distribution line " + std::to_string(line_no) + ": not an integer pair");
    }
  }
  return rows;
}

}  // namespace gtgrn::eval
