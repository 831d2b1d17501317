#include "gtgrn/mlm/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtgrn/errors.hpp"
#include "gtgrn/numcore/adam.hpp"
#include "gtgrn/numcore/block.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::mlm {

using numcore::Matrix;
using numcore::Tape;
using numcore::Var;

namespace {

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b); }

numcore::BlockShape block_shape(const MlmModel& m) {
  return {m.width(), m.ffn_hidden(), m.config().heads, true, m.config().ln_eps};
}

std::vector<std::size_t> as_rows(std::span<const TokenId> tokens) {
  return {tokens.begin(), tokens.end()};
}

}  // namespace

MlmModel::MlmModel(std::size_t vocab_size, std::size_t seq_len, const MlmConfig& config, std::uint64_t seed)
    : config_(config), vocab_size_(vocab_size), seq_len_(seq_len) {
  if (vocab_size <= walks::kFirstGene) throw ContractError("MlmModel: vocabulary has no gene tokens");
  if (seq_len == 0) throw ContractError("MlmModel: empty sequences");
  if (config.dim == 0) throw ContractError("MlmModel: dim must be positive");
  const std::size_t pe_width = config.pe_mode == walks::PeMode::add ? config.dim
                                                                    : (config.pe_dim ? config.pe_dim : config.dim);
  width_ = config.pe_mode == walks::PeMode::add ? config.dim : config.dim + pe_width;
  if (config.heads == 0 || width_ % config.heads != 0) {
    throw ContractError("MlmModel: width " + std::to_string(width_) + " not divisible by " +
                        std::to_string(config.heads) + " heads");
  }
  pe_ = walks::sinusoidal_pe(seq_len, pe_width);

  numcore::Rng rng(seed);
  params.add("embedding", numcore::uniform_matrix(vocab_size, config.dim, -config.embed_init, config.embed_init, rng));
  const auto shape = block_shape(*this);
  for (std::size_t b = 0; b < config.blocks; ++b) numcore::add_block_parameters(params, block_prefix(b), shape, rng);
  const double a = 1.0 / std::sqrt(static_cast<double>(width_));
  params.add("decoder.w", numcore::uniform_matrix(width_, vocab_size, -a, a, rng));
  params.add("decoder.b", Matrix(1, vocab_size));
}

MaskedBatch mask_batch(std::span<const TokenId> tokens, std::size_t seq_len, double rate, std::uint64_t seed,
                       bool mixed, std::size_t vocab_size) {
  if (!(rate > 0.0 && rate < 1.0)) throw ContractError("mask_batch: rate must lie in (0, 1)");
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw DimensionError("mask_batch: token count is not a multiple of the sequence length");
  }
  if (mixed && vocab_size <= walks::kFirstGene) throw ContractError("mask_batch: mixed masking needs the vocabulary size");
  MaskedBatch out;
  out.seq_len = seq_len;
  out.sequences = tokens.size() / seq_len;
  out.input.assign(tokens.begin(), tokens.end());
  out.masked.assign(tokens.size(), 0);
  out.key_valid.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out.key_valid[i] = tokens[i] != walks::kPad;

  numcore::Rng rng(seed);
  std::vector<std::size_t> pool;
  for (std::size_t s = 0; s < out.sequences; ++s) {
    pool.clear();
    for (std::size_t t = 0; t < seq_len; ++t)
      if (tokens[s * seq_len + t] >= walks::kFirstGene) pool.push_back(s * seq_len + t);
    if (pool.empty()) continue;
    std::size_t count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(pool.size()) + 1e-9));
    count = std::clamp<std::size_t>(count, 1, pool.size());
    for (std::size_t k = 0; k < count; ++k) std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t pos = pool[k];
      out.masked[pos] = 1;
      out.positions.push_back(pos);
      out.targets.push_back(tokens[pos]);
      TokenId replacement = walks::kMask;
      if (mixed) {
        const double u = rng.uniform();
        if (u >= 0.9) {
          replacement = tokens[pos];
        } else if (u >= 0.8) {
          replacement = walks::kFirstGene + static_cast<TokenId>(rng.below(vocab_size - walks::kFirstGene));
        }
      }
      out.input[pos] = replacement;
    }
  }
  return out;
}

Var mlm_hidden(Tape& tape, MlmModel& model, std::span<const TokenId> input, std::span<const char> key_valid,
               std::vector<numcore::AttentionWeights>* weights) {
  const std::size_t len = model.seq_len();
  if (input.size() % len != 0 || key_valid.size() != input.size()) {
    throw DimensionError("mlm_hidden: input does not tile into sequences of length " + std::to_string(len));
  }
  for (TokenId t : input)
    if (t >= model.vocab_size()) throw ContractError("mlm_hidden: token id " + std::to_string(t) + " out of vocabulary");
  const std::size_t sequences = input.size() / len;
  const Matrix& pe = model.positional();
  Matrix tiled(input.size(), pe.cols());
  for (std::size_t r = 0; r < input.size(); ++r) {
    const auto src = pe.row(r % len);
    std::copy(src.begin(), src.end(), tiled.row(r).begin());
  }
  const auto rows = as_rows(input);
  Var x = numcore::gather_rows(tape.param(model.params.at("embedding")), rows);
  x = model.config().pe_mode == walks::PeMode::add ? x + tape.constant(std::move(tiled))
                                                   : numcore::concat_cols(x, tape.constant(std::move(tiled)));
  const auto nbrs = numcore::sequence_neighborhoods(sequences, len, key_valid);
  const auto shape = block_shape(model);
  if (weights) weights->assign(model.config().blocks, {});
  for (std::size_t b = 0; b < model.config().blocks; ++b) {
    x = numcore::encoder_block(tape, x, model.params, block_prefix(b), shape, nbrs,
                               weights ? &(*weights)[b] : nullptr);
  }
  return x;
}

Var mlm_decode(Tape& tape, MlmModel& model, Var hidden) {
  return numcore::add_row(numcore::matmul(hidden, tape.param(model.params.at("decoder.w"))),
                          tape.param(model.params.at("decoder.b")));
}

Matrix mlm_forward(MlmModel& model, const MaskedBatch& batch) {
  if (batch.seq_len != model.seq_len()) throw DimensionError("mlm_forward: sequence length mismatch");
  Tape tape;
  const Var h = mlm_hidden(tape, model, batch.input, batch.key_valid);
  return mlm_decode(tape, model, h).value();
}

double mlm_loss(const Matrix& logits, const MaskedBatch& batch) {
  if (batch.positions.empty()) throw ContractError("mlm_loss: batch has no masked positions");
  if (logits.rows() != batch.input.size()) throw DimensionError("mlm_loss: logits do not cover every position");
  double total = 0.0;
  for (std::size_t k = 0; k < batch.positions.size(); ++k) {
    const auto row = logits.row(batch.positions[k]);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += mx + std::log(z) - row[batch.targets[k]];
  }
  return total / static_cast<double>(batch.positions.size());
}

Var mlm_loss(Var logits, const MaskedBatch& batch) {
  if (batch.positions.empty()) throw ContractError("mlm_loss: batch has no masked positions");
  if (logits.rows() != batch.input.size()) throw DimensionError("mlm_loss: logits do not cover every position");
  const std::vector<std::size_t> targets(batch.targets.begin(), batch.targets.end());
  return numcore::cross_entropy_rows(numcore::gather_rows(logits, batch.positions), targets);
}

namespace {

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t masked = 0;
};

std::vector<TokenId> gather_sequences(const walks::WalkCorpus& corpus, std::span<const std::size_t> ids) {
  std::vector<TokenId> tokens;
  tokens.reserve(ids.size() * corpus.seq_len);
  for (std::size_t id : ids) {
    const auto s = corpus.sequence(id);
    tokens.insert(tokens.end(), s.begin(), s.end());
  }
  return tokens;
}

// Loss and accuracy on the masked rows only; optionally backpropagates.
BatchOutcome run_batch(MlmModel& model, const MaskedBatch& batch, bool train) {
  BatchOutcome out;
  if (batch.positions.empty()) return out;
  Tape tape;
  const Var h = mlm_hidden(tape, model, batch.input, batch.key_valid);
  const Var logits = mlm_decode(tape, model, numcore::gather_rows(h, batch.positions));
  const std::vector<std::size_t> targets(batch.targets.begin(), batch.targets.end());
  const Var loss = numcore::cross_entropy_rows(logits, targets);
  out.masked = targets.size();
  out.loss_sum = loss.value()(0, 0) * static_cast<double>(out.masked);
  const Matrix& lv = logits.value();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto row = lv.row(k);
    out.correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == targets[k];
  }
  if (train) tape.backward(loss);
  return out;
}

}  // namespace

MlmTrainReport train_mlm(MlmModel& model, const walks::WalkCorpus& corpus, std::uint64_t seed) {
  const MlmConfig& cfg = model.config();
  MlmTrainReport report;
  if (cfg.epochs == 0) return report;
  if (corpus.size() == 0) throw ContractError("train_mlm: empty corpus");
  if (corpus.seq_len != model.seq_len()) throw DimensionError("train_mlm: corpus sequence length mismatch");
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  numcore::AdamConfig acfg;
  acfg.lr = cfg.lr;
  numcore::Adam adam(acfg);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    numcore::Rng shuffler(numcore::derive_seed(seed, {0, e}));
    shuffler.shuffle(std::span<std::size_t>(order));
    BatchOutcome epoch;
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const auto ids = std::span<const std::size_t>(order).subspan(start, std::min(bs, order.size() - start));
      const auto tokens = gather_sequences(corpus, ids);
      const auto batch = mask_batch(tokens, corpus.seq_len, cfg.mask_rate, numcore::derive_seed(seed, {1, e, b}),
                                    cfg.mixed_masking, model.vocab_size());
      const auto r = run_batch(model, batch, true);
      if (r.masked == 0) continue;
      adam.step(model.params);
      epoch.loss_sum += r.loss_sum;
      epoch.correct += r.correct;
      epoch.masked += r.masked;
    }
    const double denom = static_cast<double>(std::max<std::size_t>(1, epoch.masked));
    report.loss.push_back(epoch.loss_sum / denom);
    report.accuracy.push_back(static_cast<double>(epoch.correct) / denom);
  }
  return report;
}

double masked_accuracy(MlmModel& model, const walks::WalkCorpus& corpus, std::uint64_t seed) {
  const MlmConfig& cfg = model.config();
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> ids(corpus.size());
  std::iota(ids.begin(), ids.end(), 0);
  BatchOutcome total;
  for (std::size_t start = 0, b = 0; start < ids.size(); start += bs, ++b) {
    const auto slice = std::span<const std::size_t>(ids).subspan(start, std::min(bs, ids.size() - start));
    const auto tokens = gather_sequences(corpus, slice);
    const auto batch = mask_batch(tokens, corpus.seq_len, cfg.mask_rate, numcore::derive_seed(seed, {b}));
    const auto r = run_batch(model, batch, false);
    total.correct += r.correct;
    total.masked += r.masked;
  }
  if (total.masked == 0) throw ContractError("masked_accuracy: corpus has no maskable tokens");
  return static_cast<double>(total.correct) / static_cast<double>(total.masked);
}

Matrix extract_global_embeddings(const MlmModel& model) {
  const Matrix& e = model.params.at("embedding").value;
  Matrix out(e.rows() - walks::kFirstGene, e.cols());
  std::copy(e.values().begin() + static_cast<std::ptrdiff_t>(walks::kFirstGene * e.cols()), e.values().end(),
            out.values().begin());
  return out;
}

}  // namespace gtgrn::mlm
