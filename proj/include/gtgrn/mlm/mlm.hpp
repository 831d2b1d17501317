#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gtgrn/numcore/attention.hpp"
#include "gtgrn/numcore/autodiff.hpp"
#include "gtgrn/walks/walks.hpp"

namespace gtgrn::mlm {

using walks::TokenId;

struct MlmConfig {
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  /// FFN inner width; 0 means 2 * model width.
  std::size_t ffn_hidden = 0;
  walks::PeMode pe_mode = walks::PeMode::add;
  /// Positional width in concat mode (model width becomes dim + pe_dim); 0 means dim.
  std::size_t pe_dim = 0;
  /// Token embedding starts as U(-embed_init, embed_init).
  double embed_init = 0.1;
  double ln_eps = 1e-5;
  double mask_rate = 0.20;
  /// BERT-style 80/10/10 replacement instead of plain [MASK].
  bool mixed_masking = false;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
};

/// Token embedding, encoder blocks "block<b>.*", decoder "decoder.w" / "decoder.b".
class MlmModel {
 public:
  MlmModel(std::size_t vocab_size, std::size_t seq_len, const MlmConfig& config, std::uint64_t seed);

  const MlmConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t seq_len() const noexcept { return seq_len_; }
  /// Width of the hidden states (dim, or dim + pe_dim in concat mode).
  std::size_t width() const noexcept { return width_; }
  std::size_t ffn_hidden() const noexcept { return config_.ffn_hidden ? config_.ffn_hidden : 2 * width_; }
  const numcore::Matrix& positional() const noexcept { return pe_; }

  numcore::ParameterSet params;

 private:
  MlmConfig config_;
  std::size_t vocab_size_ = 0;
  std::size_t seq_len_ = 0;
  std::size_t width_ = 0;
  numcore::Matrix pe_;
};

struct MaskedBatch {
  std::size_t sequences = 0;
  std::size_t seq_len = 0;
  /// Tokens after masking.
  std::vector<TokenId> input;
  /// Flat row index (sequence * seq_len + position) of each masked slot, ascending.
  std::vector<std::size_t> positions;
  /// Original token at each masked slot.
  std::vector<TokenId> targets;
  std::vector<char> masked;
  std::vector<char> key_valid;
};

/// Masks floor(rate * maskable) gene positions per sequence (at least one when
/// any exist). [CLS] and [PAD] are never chosen. Plain [MASK] replacement
/// unless `mixed`, which keeps 10% unchanged and swaps 10% for a random gene
/// token (needs vocab_size).
MaskedBatch mask_batch(std::span<const TokenId> tokens, std::size_t seq_len, double rate,
                       std::uint64_t seed, bool mixed = false, std::size_t vocab_size = 0);

/// Final hidden states, (sequences * seq_len) x width.
numcore::Var mlm_hidden(numcore::Tape& tape, MlmModel& model, std::span<const TokenId> input,
                        std::span<const char> key_valid,
                        std::vector<numcore::AttentionWeights>* weights = nullptr);

/// Decoder over the selected hidden rows.
numcore::Var mlm_decode(numcore::Tape& tape, MlmModel& model, numcore::Var hidden);

/// Vocabulary logits at every position, (sequences * seq_len) x V.
numcore::Matrix mlm_forward(MlmModel& model, const MaskedBatch& batch);

/// Mean negative log-likelihood over the masked positions of full-position
/// logits. Throws ContractError when nothing is masked.
double mlm_loss(const numcore::Matrix& logits, const MaskedBatch& batch);

/// Differentiable variant of mlm_loss.
numcore::Var mlm_loss(numcore::Var logits, const MaskedBatch& batch);

struct MlmTrainReport {
  /// Mean masked-token NLL per epoch.
  std::vector<double> loss;
  /// Masked-token argmax accuracy per epoch on the training masks.
  std::vector<double> accuracy;
};

/// Adam on the masked-token loss; sequences are reshuffled every epoch and
/// every batch draws fresh masks, all from seeds derived from `seed`.
MlmTrainReport train_mlm(MlmModel& model, const walks::WalkCorpus& corpus, std::uint64_t seed);

/// Argmax accuracy over the whole vocabulary on freshly masked copies of the corpus.
double masked_accuracy(MlmModel& model, const walks::WalkCorpus& corpus, std::uint64_t seed);

/// Gene rows of the token embedding (specials dropped), gene index order.
numcore::Matrix extract_global_embeddings(const MlmModel& model);

}  // namespace gtgrn::mlm
