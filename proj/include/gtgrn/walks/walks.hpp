#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtgrn/graphio/graph.hpp"
#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::walks {

using TokenId = std::uint32_t;

inline constexpr TokenId kCls = 0;
inline constexpr TokenId kMask = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kFirstGene = 3;

/// Specials at fixed ids 0..2, then one token per gene in graph index order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> gene_names);

  std::size_t size() const noexcept { return kFirstGene + genes_.size(); }
  std::size_t gene_count() const noexcept { return genes_.size(); }
  TokenId token_of(std::size_t gene) const { return kFirstGene + static_cast<TokenId>(gene); }
  std::optional<std::size_t> gene_of(TokenId token) const;
  std::string token_name(TokenId token) const;
  const std::vector<std::string>& gene_names() const noexcept { return genes_; }

 private:
  std::vector<std::string> genes_;
};

struct WalkOptions {
  std::size_t walks_per_node = 10;
  /// Gene positions per sequence; sequences hold length + 1 tokens.
  std::size_t length = 20;
  double p_return = 1.0;
  double q_inout = 1.0;
  std::size_t jobs = 1;
};

/// Flat row-major token storage, one sequence per row.
struct WalkCorpus {
  std::size_t seq_len = 0;
  std::vector<TokenId> tokens;
  std::vector<std::size_t> provenance;
  /// Start node of each sequence.
  std::vector<std::size_t> start;

  std::size_t size() const noexcept { return provenance.size(); }
  std::span<const TokenId> sequence(std::size_t k) const {
    return {tokens.data() + k * seq_len, seq_len};
  }
};

/// node2vec walks: r walks per node per network, ordered network -> node ->
/// walk. Each walk has its own generator seeded from (seed, network, node, walk),
/// so the corpus is identical for any job count. All graphs must share one
/// gene list. Isolated nodes yield [CLS], v, then [PAD]s.
WalkCorpus generate_walks(std::span<const graphio::GeneGraph> graphs, const WalkOptions& options,
                          std::uint64_t seed);

/// One walk of `length` nodes from `start` (no [CLS], no padding).
std::vector<std::size_t> node2vec_walk(const graphio::GeneGraph& g, std::size_t start,
                                       std::size_t length, double p_return, double q_inout,
                                       std::uint64_t seed);

/// len x p table: sin(pos / 10000^(i/p)) at even i, cos(pos / 10000^((i-1)/p)) at odd i.
numcore::Matrix sinusoidal_pe(std::size_t len, std::size_t p);

enum class PeMode { add, concat };

struct EncodedBatch {
  std::size_t sequences = 0;
  std::size_t seq_len = 0;
  /// (sequences * seq_len) x width.
  numcore::Matrix x;
  /// 0 at [PAD] positions.
  std::vector<char> key_valid;
};

/// Embedding rows for each token combined with the positional table, either
/// added (pe width == d) or appended (width d + p).
EncodedBatch encode_batch(std::span<const TokenId> tokens, std::size_t seq_len,
                          const numcore::Matrix& embedding, const numcore::Matrix& pe,
                          PeMode mode = PeMode::add);

/// Space-separated token names, one sequence per line.
std::string format_corpus(const WalkCorpus& corpus, const Vocabulary& vocab);

}  // namespace gtgrn::walks
