#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gtgrn/numcore/autodiff.hpp"

namespace gtgrn::numcore {

/// Compressed key lists: query row i attends to rows
/// indices[offsets[i] .. offsets[i+1]).
struct Neighborhoods {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  std::size_t query_count() const noexcept { return offsets.size() - 1; }
  std::size_t entry_count() const noexcept { return indices.size(); }
  std::span<const std::size_t> keys(std::size_t query) const {
    return {indices.data() + offsets[query], offsets[query + 1] - offsets[query]};
  }
};

/// Block-diagonal layout for a batch of padded sequences stacked row-wise:
/// every position of sequence b attends to the valid positions of sequence b.
/// key_valid has one flag per stacked row.
Neighborhoods sequence_neighborhoods(std::size_t num_sequences, std::size_t seq_len,
                                     std::span<const char> key_valid);

/// Softmax weights per head, laid out [head * entry_count + entry].
struct AttentionWeights {
  std::size_t heads = 0;
  std::vector<double> values;
};

/// Multi-head scaled dot-product attention restricted to neighborhoods.
/// q, k, v are (rows x d); head h uses columns [h*d/heads, (h+1)*d/heads).
/// Output row i, head h is sum_j w_ij v_j with w = softmax_j(q_i.k_j / sqrt(d/heads)).
/// Heads are concatenated column-wise; a query with no keys yields zeros.
Var neighborhood_attention(Var q, Var k, Var v, const Neighborhoods& nbrs, std::size_t heads,
                           AttentionWeights* weights_out = nullptr);

}  // namespace gtgrn::numcore
