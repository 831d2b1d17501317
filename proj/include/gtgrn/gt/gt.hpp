#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gtgrn/graphio/graph.hpp"
#include "gtgrn/graphio/split.hpp"
#include "gtgrn/numcore/attention.hpp"
#include "gtgrn/numcore/autodiff.hpp"

namespace gtgrn::gt {

using numcore::Matrix;

struct LaplacianPE {
  /// n x k, row i is the positional encoding of gene i.
  Matrix lambda;
  /// Full ascending spectrum, kept for diagnostics.
  std::vector<double> eigenvalues;
  std::size_t components = 0;
};

/// D^{-1/2} (D - A) D^{-1/2} with D^{-1/2} = 0 for isolated nodes, so an
/// isolated node contributes a zero row and its own zero eigenvalue.
Matrix normalized_laplacian(const graphio::GeneGraph& g);

/// The k eigenvectors following the trivial ones (eigenvalue < 1e-8, one per
/// connected component). Throws ContractError when k >= n or when fewer than
/// k nontrivial eigenvectors exist; NumericError if the spectrum leaves [0, 2].
LaplacianPE laplacian_pe(const graphio::GeneGraph& g, std::size_t k);

/// Which modalities feed the fused features: expression (Z), global (xi), positional (lambda).
struct ModalityMask {
  bool expression = true;
  bool global = true;
  bool positional = true;

  bool any() const noexcept { return expression || global || positional; }
  std::string label() const;
};

struct GtConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 4;
  /// FFN inner width; 0 means 2 * dim.
  std::size_t ffn_hidden = 0;
  /// Link decoder hidden width; 0 means dim.
  std::size_t decoder_hidden = 0;
  /// Every node also attends to itself.
  bool self_loops = true;
  double ln_eps = 1e-5;
  std::size_t epochs = 200;
  double lr = 1e-3;
  /// Early stopping patience on validation AUROC; 0 disables it.
  std::size_t patience = 10;
  /// Fraction of training positives drawn each epoch as supervision targets
  /// and hidden from message passing for that epoch; 0 supervises every
  /// training edge on the full training graph.
  double target_fraction = 0.0;
  ModalityMask mask;
};

/// Per-gene inputs, all with n rows.
struct GtInputs {
  Matrix expression;  // VAE means, n x d_z
  Matrix global;      // MLM embeddings, n x d_xi
  Matrix positional;  // Laplacian PE, n x k
};

/// Projections "proj.expr", "proj.global", "proj.pos" (.w, .b); layers
/// "layer<l>.*"; decoder "decoder.w1/.b1/.w2/.b2".
class GtModel {
 public:
  GtModel(std::size_t expression_dim, std::size_t global_dim, std::size_t positional_dim, const GtConfig& config,
          std::uint64_t seed);

  const GtConfig& config() const noexcept { return config_; }
  void set_mask(const ModalityMask& mask) { config_.mask = mask; }
  std::size_t expression_dim() const noexcept { return dims_[0]; }
  std::size_t global_dim() const noexcept { return dims_[1]; }
  std::size_t positional_dim() const noexcept { return dims_[2]; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t ffn_hidden() const noexcept { return config_.ffn_hidden ? config_.ffn_hidden : 2 * config_.dim; }
  std::size_t decoder_hidden() const noexcept { return config_.decoder_hidden ? config_.decoder_hidden : config_.dim; }

  numcore::ParameterSet params;

 private:
  GtConfig config_;
  std::size_t dims_[3] = {0, 0, 0};
  std::uint64_t seed_ = 0;
};

/// h = Z S + s + xi T + t + lambda U + u, with masked-out modalities skipped.
numcore::Var fuse_inputs(numcore::Tape& tape, GtModel& model, const GtInputs& inputs);
Matrix fuse_inputs(GtModel& model, const GtInputs& inputs);

/// Neighbor lists of g, optionally with each node itself included.
numcore::Neighborhoods graph_neighborhoods(const graphio::GeneGraph& g, bool self_loops);

numcore::Var gt_layer_forward(numcore::Tape& tape, GtModel& model, std::size_t layer, const numcore::Neighborhoods& nbrs,
                              numcore::Var h, numcore::AttentionWeights* weights = nullptr);

/// Fusion followed by every layer: the final n x d node states.
numcore::Var gt_forward(numcore::Tape& tape, GtModel& model, const GtInputs& inputs,
                        const numcore::Neighborhoods& nbrs);
Matrix gt_embeddings(GtModel& model, const GtInputs& inputs, const graphio::GeneGraph& g);

/// Directed decoder logits MLP([h_i ; h_j]) for each pair in the given order, P x 1.
numcore::Var pair_logits(numcore::Tape& tape, GtModel& model, numcore::Var h, std::span<const graphio::Edge> pairs);

/// (sigmoid(MLP([h_i; h_j])) + sigmoid(MLP([h_j; h_i]))) / 2.
double link_score(GtModel& model, const Matrix& h, std::size_t i, std::size_t j);
std::vector<double> link_scores(GtModel& model, const Matrix& h, std::span<const graphio::Edge> pairs);

struct GtTrainReport {
  std::vector<double> loss;
  std::vector<double> val_auroc;
  std::size_t best_epoch = 0;
  double best_val_auroc = 0.0;
  bool stopped_early = false;
};

/// Full-batch BCE on the training positives and negatives (both pair
/// orders), message passing over g_train. After each Adam step the validation
/// AUROC is recorded; training stops after `patience` epochs without
/// improvement and the best parameters are restored. Deterministic.
GtTrainReport train_link_prediction(GtModel& model, const graphio::GeneGraph& g_train, const graphio::EdgeSplit& split,
                                    const GtInputs& inputs);

/// Symmetrized scores of the given pairs with message passing over g_structure.
std::vector<double> score_pairs(GtModel& model, const GtInputs& inputs, const graphio::GeneGraph& g_structure,
                                std::span<const graphio::Edge> pairs);

/// Every pair i < j in canonical order.
graphio::ScoredEdgeList reconstruct_network(GtModel& model, const GtInputs& inputs,
                                            const graphio::GeneGraph& g_structure);

/// JSON checkpoint: format tag, version, config, seed and every named weight array.
void save_checkpoint(const GtModel& model, const std::string& path);
GtModel load_checkpoint(const std::string& path);

}  // namespace gtgrn::gt
