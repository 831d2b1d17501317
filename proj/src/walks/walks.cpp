#include "gtgrn/walks/walks.hpp"

#include <cmath>
#include <thread>

#include "gtgrn/errors.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::walks {

Vocabulary::Vocabulary(std::vector<std::string> gene_names) : genes_(std::move(gene_names)) {}

std::optional<std::size_t> Vocabulary::gene_of(TokenId token) const {
  if (token < kFirstGene || token >= size()) return std::nullopt;
  return token - kFirstGene;
}

std::string Vocabulary::token_name(TokenId token) const {
  switch (token) {
    case kCls: return "[CLS]";
    case kMask: return "[MASK]";
    case kPad: return "[PAD]";
    default: break;
  }
  if (token >= size()) throw ContractError("token id " + std::to_string(token) + " outside vocabulary");
  return genes_[token - kFirstGene];
}

std::vector<std::size_t> node2vec_walk(const graphio::GeneGraph& g, std::size_t start,
                                       std::size_t length, double p_return, double q_inout,
                                       std::uint64_t seed) {
  std::vector<std::size_t> walk;
  walk.reserve(length);
  if (length == 0) return walk;
  walk.push_back(start);
  if (g.degree(start) == 0) return walk;
  numcore::Rng rng(seed);
  const bool first_order = p_return == 1.0 && q_inout == 1.0;
  std::vector<double> weights;
  while (walk.size() < length) {
    const std::size_t cur = walk.back();
    const auto nbrs = g.neighbors(cur);
    if (first_order || walk.size() == 1) {
      walk.push_back(nbrs[rng.below(nbrs.size())]);
      continue;
    }
    const std::size_t prev = walk[walk.size() - 2];
    weights.resize(nbrs.size());
    double total = 0.0;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      const std::size_t x = nbrs[k];
      weights[k] = x == prev ? 1.0 / p_return : (g.has_edge(prev, x) ? 1.0 : 1.0 / q_inout);
      total += weights[k];
    }
    const double r = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = nbrs.size() - 1;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      acc += weights[k];
      if (r < acc) {
        pick = k;
        break;
      }
    }
    walk.push_back(nbrs[pick]);
  }
  return walk;
}

WalkCorpus generate_walks(std::span<const graphio::GeneGraph> graphs, const WalkOptions& options,
                          std::uint64_t seed) {
  if (graphs.empty()) throw ContractError("generate_walks: empty graph list");
  if (options.length < 1 || options.walks_per_node < 1) {
    throw ContractError("generate_walks: need length >= 1 and walks_per_node >= 1");
  }
  if (!(options.p_return > 0.0) || !(options.q_inout > 0.0)) {
    throw ContractError("generate_walks: p_return and q_inout must be > 0");
  }
  for (const auto& g : graphs) {
    if (g.gene_names() != graphs.front().gene_names()) {
      throw ContractError("generate_walks: all networks must share the same gene list");
    }
  }
  const std::size_t n = graphs.front().n();
  const std::size_t r = options.walks_per_node;
  WalkCorpus corpus;
  corpus.seq_len = options.length + 1;
  const std::size_t count = graphs.size() * n * r;
  corpus.tokens.assign(count * corpus.seq_len, kPad);
  corpus.provenance.resize(count);
  corpus.start.resize(count);

  auto fill = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t c = k / (n * r), v = (k / r) % n, w = k % r;
      const auto walk = node2vec_walk(graphs[c], v, options.length, options.p_return, options.q_inout,
                                      numcore::derive_seed(seed, {c, v, w}));
      TokenId* row = corpus.tokens.data() + k * corpus.seq_len;
      row[0] = kCls;
      for (std::size_t t = 0; t < walk.size(); ++t) row[t + 1] = kFirstGene + static_cast<TokenId>(walk[t]);
      corpus.provenance[k] = c;
      corpus.start[k] = v;
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, count));
  if (jobs == 1) {
    fill(0, count);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(fill, count * j / jobs, count * (j + 1) / jobs);
  }
  return corpus;
}

numcore::Matrix sinusoidal_pe(std::size_t len, std::size_t p) {
  if (p == 0 || p % 2 != 0) throw ContractError("sinusoidal_pe: dimension must be even, got " + std::to_string(p));
  numcore::Matrix pe(len, p);
  for (std::size_t pos = 0; pos < len; ++pos)
    for (std::size_t i = 0; i < p; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(p));
      pe(pos, i) = std::sin(angle);
      pe(pos, i + 1) = std::cos(angle);
    }
  return pe;
}

EncodedBatch encode_batch(std::span<const TokenId> tokens, std::size_t seq_len,
                          const numcore::Matrix& embedding, const numcore::Matrix& pe, PeMode mode) {
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw DimensionError("encode_batch: token count is not a multiple of the sequence length");
  }
  if (pe.rows() < seq_len) throw DimensionError("encode_batch: positional table shorter than the sequences");
  const std::size_t d = embedding.cols();
  if (mode == PeMode::add && pe.cols() != d) {
    throw DimensionError("encode_batch: additive positional encoding needs width " + std::to_string(d) + ", got " +
                         std::to_string(pe.cols()));
  }
  const std::size_t width = mode == PeMode::add ? d : d + pe.cols();
  EncodedBatch out;
  out.seq_len = seq_len;
  out.sequences = tokens.size() / seq_len;
  out.x = numcore::Matrix(tokens.size(), width);
  out.key_valid.resize(tokens.size());
  for (std::size_t row = 0; row < tokens.size(); ++row) {
    const TokenId t = tokens[row];
    if (t >= embedding.rows()) throw ContractError("encode_batch: token id " + std::to_string(t) + " out of vocabulary");
    const std::size_t pos = row % seq_len;
    const auto e = embedding.row(t);
    const auto p = pe.row(pos);
    auto dst = out.x.row(row);
    for (std::size_t c = 0; c < d; ++c) dst[c] = e[c];
    if (mode == PeMode::add) {
      for (std::size_t c = 0; c < d; ++c) dst[c] += p[c];
    } else {
      for (std::size_t c = 0; c < pe.cols(); ++c) dst[d + c] = p[c];
    }
    out.key_valid[row] = t != kPad;
  }
  return out;
}

std::string format_corpus(const WalkCorpus& corpus, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto seq = corpus.sequence(k);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (t) out += ' ';
      out += vocab.token_name(seq[t]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace gtgrn::walks
