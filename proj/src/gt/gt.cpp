#include "gtgrn/gt/gt.hpp"

#include <algorithm>
#include <cmath>

#include "gtgrn/errors.hpp"
#include "gtgrn/eval/eval.hpp"
#include "gtgrn/numcore/adam.hpp"
#include "gtgrn/numcore/block.hpp"
#include "gtgrn/numcore/random.hpp"
#include "gtgrn/numcore/sym_eig.hpp"

namespace gtgrn::gt {

using numcore::Tape;
using numcore::Var;

namespace {

constexpr double kTrivialEigenvalue = 1e-8;

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

numcore::BlockShape layer_shape(const GtModel& m) {
  return {m.config().dim, m.ffn_hidden(), m.config().heads, false, m.config().ln_eps};
}

}  // namespace

Matrix normalized_laplacian(const graphio::GeneGraph& g) {
  const std::size_t n = g.n();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (g.degree(i) > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    lap(i, i) = g.degree(i) > 0 ? 1.0 : 0.0;
    for (std::size_t j : g.neighbors(i)) lap(i, j) = -inv_sqrt[i] * inv_sqrt[j];
  }
  return lap;
}

LaplacianPE laplacian_pe(const graphio::GeneGraph& g, std::size_t k) {
  const std::size_t n = g.n();
  if (k == 0 || k >= n) {
    throw ContractError("laplacian_pe: need 0 < k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  const auto eig = numcore::sym_eig(normalized_laplacian(g));
  for (double ev : eig.eigenvalues)
    if (ev < -1e-9 || ev > 2.0 + 1e-9) {
      throw NumericError("laplacian_pe: eigenvalue " + std::to_string(ev) + " outside [0, 2]");
    }
  LaplacianPE pe;
  pe.eigenvalues = eig.eigenvalues;
  pe.components = eval::connected_components(g).count;
  std::size_t trivial = 0;
  while (trivial < n && eig.eigenvalues[trivial] < kTrivialEigenvalue) ++trivial;
  if (trivial + k > n) {
    throw ContractError("laplacian_pe: k=" + std::to_string(k) + " but the graph has " + std::to_string(pe.components) +
                        " connected components, leaving only " + std::to_string(n - trivial) +
                        " nontrivial eigenvectors");
  }
  pe.lambda = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) pe.lambda(i, c) = eig.eigenvectors(i, trivial + c);
  return pe;
}

std::string ModalityMask::label() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += name;
  };
  add(expression, "Z");
  add(global, "xi");
  add(positional, "lambda");
  return out.empty() ? "none" : out;
}

GtModel::GtModel(std::size_t expression_dim, std::size_t global_dim, std::size_t positional_dim, const GtConfig& config,
                 std::uint64_t seed)
    : config_(config), dims_{expression_dim, global_dim, positional_dim}, seed_(seed) {
  if (config.dim == 0 || config.heads == 0 || config.dim % config.heads != 0) {
    throw ContractError("GtModel: dim " + std::to_string(config.dim) + " not divisible by " +
                        std::to_string(config.heads) + " heads");
  }
  numcore::Rng rng(seed);
  const std::size_t d = config.dim;
  const char* names[3] = {"proj.expr", "proj.global", "proj.pos"};
  for (int m = 0; m < 3; ++m) {
    params.add(std::string(names[m]) + ".w", numcore::xavier_uniform(dims_[m], d, rng));
    params.add(std::string(names[m]) + ".b", Matrix(1, d));
  }
  const auto shape = layer_shape(*this);
  for (std::size_t l = 0; l < config.layers; ++l) numcore::add_block_parameters(params, layer_prefix(l), shape, rng);
  const std::size_t hd = decoder_hidden();
  params.add("decoder.w1", numcore::xavier_uniform(2 * d, hd, rng));
  params.add("decoder.b1", Matrix(1, hd));
  params.add("decoder.w2", numcore::xavier_uniform(hd, 1, rng));
  params.add("decoder.b2", Matrix(1, 1));
}

Var fuse_inputs(Tape& tape, GtModel& model, const GtInputs& inputs) {
  const ModalityMask& mask = model.config().mask;
  if (!mask.any()) throw ContractError("fuse_inputs: every modality is masked out");
  struct Slot {
    bool on;
    const Matrix* x;
    std::size_t width;
    const char* name;
  };
  const Slot slots[3] = {{mask.expression, &inputs.expression, model.expression_dim(), "proj.expr"},
                         {mask.global, &inputs.global, model.global_dim(), "proj.global"},
                         {mask.positional, &inputs.positional, model.positional_dim(), "proj.pos"}};
  std::size_t rows = 0;
  bool have_rows = false;
  for (const Slot& s : slots) {
    if (!s.on) continue;
    if (s.x->cols() != s.width) {
      throw DimensionError(std::string("fuse_inputs: ") + s.name + " expects width " + std::to_string(s.width) +
                           ", got " + s.x->shape_string());
    }
    if (have_rows && s.x->rows() != rows) {
      throw DimensionError("fuse_inputs: modalities disagree on the number of genes (" + std::to_string(rows) +
                           " vs " + std::to_string(s.x->rows()) + ")");
    }
    rows = s.x->rows();
    have_rows = true;
  }
  Var h;
  for (const Slot& s : slots) {
    if (!s.on) continue;
    const std::string name(s.name);
    Var part = numcore::add_row(numcore::matmul(tape.constant(*s.x), tape.param(model.params.at(name + ".w"))),
                                tape.param(model.params.at(name + ".b")));
    h = h.valid() ? h + part : part;
  }
  return h;
}

Matrix fuse_inputs(GtModel& model, const GtInputs& inputs) {
  Tape tape;
  return fuse_inputs(tape, model, inputs).value();
}

numcore::Neighborhoods graph_neighborhoods(const graphio::GeneGraph& g, bool self_loops) {
  numcore::Neighborhoods nb;
  nb.offsets.reserve(g.n() + 1);
  for (std::size_t i = 0; i < g.n(); ++i) {
    const auto adj = g.neighbors(i);
    bool placed = !self_loops;
    for (std::size_t j : adj) {
      if (!placed && j > i) {
        nb.indices.push_back(i);
        placed = true;
      }
      nb.indices.push_back(j);
    }
    if (!placed) nb.indices.push_back(i);
    nb.offsets.push_back(nb.indices.size());
  }
  return nb;
}

Var gt_layer_forward(Tape& tape, GtModel& model, std::size_t layer, const numcore::Neighborhoods& nbrs, Var h,
                     numcore::AttentionWeights* weights) {
  if (layer >= model.config().layers) throw ContractError("gt_layer_forward: layer index out of range");
  if (h.cols() != model.config().dim || nbrs.query_count() != h.rows()) {
    throw DimensionError("gt_layer_forward: states " + h.value().shape_string() + " do not match width " +
                         std::to_string(model.config().dim) + " and " + std::to_string(nbrs.query_count()) + " nodes");
  }
  return numcore::encoder_block(tape, h, model.params, layer_prefix(layer), layer_shape(model), nbrs, weights);
}

Var gt_forward(Tape& tape, GtModel& model, const GtInputs& inputs, const numcore::Neighborhoods& nbrs) {
  Var h = fuse_inputs(tape, model, inputs);
  for (std::size_t l = 0; l < model.config().layers; ++l) h = gt_layer_forward(tape, model, l, nbrs, h);
  return h;
}

Matrix gt_embeddings(GtModel& model, const GtInputs& inputs, const graphio::GeneGraph& g) {
  Tape tape;
  return gt_forward(tape, model, inputs, graph_neighborhoods(g, model.config().self_loops)).value();
}

Var pair_logits(Tape& tape, GtModel& model, Var h, std::span<const graphio::Edge> pairs) {
  const std::size_t d = model.config().dim;
  if (h.cols() != d) throw DimensionError("pair_logits: node states have the wrong width");
  std::vector<std::size_t> left, right;
  left.reserve(pairs.size());
  right.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    if (i >= h.rows() || j >= h.rows()) throw ContractError("pair_logits: gene index out of range");
    left.push_back(i);
    right.push_back(j);
  }
  // [h_i ; h_j] W1 = h_i W1[:d] + h_j W1[d:], projected once per node.
  std::vector<std::size_t> top(d), bottom(d);
  for (std::size_t r = 0; r < d; ++r) {
    top[r] = r;
    bottom[r] = d + r;
  }
  Var w1v = tape.param(model.params.at("decoder.w1"));
  Var w1_top = numcore::gather_rows(w1v, top);
  Var w1_bottom = numcore::gather_rows(w1v, bottom);
  Var a = numcore::matmul(h, w1_top);
  Var b = numcore::matmul(h, w1_bottom);
  Var hidden = numcore::gather_rows(a, left) + numcore::gather_rows(b, right);
  hidden = numcore::relu(numcore::add_row(hidden, tape.param(model.params.at("decoder.b1"))));
  return numcore::add_row(numcore::matmul(hidden, tape.param(model.params.at("decoder.w2"))),
                          tape.param(model.params.at("decoder.b2")));
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> link_scores(GtModel& model, const Matrix& h, std::span<const graphio::Edge> pairs) {
  std::vector<graphio::Edge> both;
  both.reserve(2 * pairs.size());
  for (const auto& p : pairs) both.push_back(p);
  for (const auto& [i, j] : pairs) both.push_back({j, i});
  Tape tape;
  const Matrix& logits = pair_logits(tape, model, tape.constant(h), both).value();
  std::vector<double> out(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out[k] = 0.5 * (stable_sigmoid(logits(k, 0)) + stable_sigmoid(logits(pairs.size() + k, 0)));
  }
  return out;
}

double link_score(GtModel& model, const Matrix& h, std::size_t i, std::size_t j) {
  const graphio::Edge p{i, j};
  return link_scores(model, h, std::span<const graphio::Edge>(&p, 1))[0];
}

std::vector<double> score_pairs(GtModel& model, const GtInputs& inputs, const graphio::GeneGraph& g_structure,
                                std::span<const graphio::Edge> pairs) {
  return link_scores(model, gt_embeddings(model, inputs, g_structure), pairs);
}

namespace {

double validation_auroc(GtModel& model, const GtInputs& inputs, const graphio::GeneGraph& g,
                        const graphio::EdgeSplit& split) {
  std::vector<graphio::Edge> pairs(split.val_pos);
  pairs.insert(pairs.end(), split.val_neg.begin(), split.val_neg.end());
  const auto scores = score_pairs(model, inputs, g, pairs);
  std::vector<char> labels(pairs.size(), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(split.val_pos.size()), 1);
  return eval::auroc(scores, labels);
}

}  // namespace

GtTrainReport train_link_prediction(GtModel& model, const graphio::GeneGraph& g_train, const graphio::EdgeSplit& split,
                                    const GtInputs& inputs) {
  if (split.train_pos.empty() || split.train_neg.empty()) {
    throw ContractError("train_link_prediction: need training positives and negatives");
  }
  const bool validate = !split.val_pos.empty() && !split.val_neg.empty();
  const auto nbrs = graph_neighborhoods(g_train, model.config().self_loops);

  std::vector<graphio::Edge> pairs;
  std::vector<double> labels;
  for (int orient = 0; orient < 2; ++orient) {
    for (const auto& [i, j] : split.train_pos) {
      pairs.push_back(orient ? graphio::Edge{j, i} : graphio::Edge{i, j});
      labels.push_back(1.0);
    }
    for (const auto& [i, j] : split.train_neg) {
      pairs.push_back(orient ? graphio::Edge{j, i} : graphio::Edge{i, j});
      labels.push_back(0.0);
    }
  }

  numcore::Adam adam({model.config().lr});
  GtTrainReport report;
  numcore::ParameterSet best = model.params;
  report.best_val_auroc = -1.0;
  std::size_t since_best = 0;
  const double frac = model.config().target_fraction;
  if (frac < 0.0 || frac > 1.0) throw ContractError("train_link_prediction: target_fraction must lie in [0, 1]");
  for (std::size_t epoch = 0; epoch < model.config().epochs; ++epoch) {
    {
      numcore::Neighborhoods epoch_nbrs;
      std::vector<graphio::Edge> epoch_pairs;
      std::vector<double> epoch_labels;
      if (frac > 0.0) {
        // Hide a fresh subset of positives from message passing and supervise
        // on those plus an equal share of the negatives.
        numcore::Rng rng(numcore::derive_seed(model.seed(), {epoch}));
        std::vector<graphio::Edge> pos(split.train_pos), neg(split.train_neg);
        rng.shuffle(std::span<graphio::Edge>(pos));
        rng.shuffle(std::span<graphio::Edge>(neg));
        const auto n_pos = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(pos.size()))));
        const auto n_neg = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(neg.size()))));
        const std::vector<graphio::Edge> kept(pos.begin() + static_cast<std::ptrdiff_t>(n_pos), pos.end());
        epoch_nbrs = graph_neighborhoods(g_train.with_edges(kept), model.config().self_loops);
        for (int orient = 0; orient < 2; ++orient) {
          for (std::size_t k = 0; k < n_pos; ++k) {
            const auto [i, j] = pos[k];
            epoch_pairs.push_back(orient ? graphio::Edge{j, i} : graphio::Edge{i, j});
            epoch_labels.push_back(1.0);
          }
          for (std::size_t k = 0; k < n_neg; ++k) {
            const auto [i, j] = neg[k];
            epoch_pairs.push_back(orient ? graphio::Edge{j, i} : graphio::Edge{i, j});
            epoch_labels.push_back(0.0);
          }
        }
      }
      const bool full = frac == 0.0;
      Tape tape;
      const Var h = gt_forward(tape, model, inputs, full ? nbrs : epoch_nbrs);
      const Var loss =
          numcore::bce_with_logits(pair_logits(tape, model, h, full ? pairs : epoch_pairs), full ? labels : epoch_labels);
      report.loss.push_back(loss.value()(0, 0));
      tape.backward(loss);
    }
    adam.step(model.params);
    if (!validate) continue;
    const double auc = validation_auroc(model, inputs, g_train, split);
    report.val_auroc.push_back(auc);
    if (auc > report.best_val_auroc) {
      report.best_val_auroc = auc;
      report.best_epoch = epoch;
      best = model.params;
      since_best = 0;
    } else if (model.config().patience > 0 && ++since_best >= model.config().patience) {
      report.stopped_early = true;
      break;
    }
  }
  if (validate) {
    model.params = best;
  } else {
    report.best_epoch = report.loss.empty() ? 0 : report.loss.size() - 1;
    report.best_val_auroc = 0.0;
  }
  return report;
}

graphio::ScoredEdgeList reconstruct_network(GtModel& model, const GtInputs& inputs,
                                            const graphio::GeneGraph& g_structure) {
  const std::size_t n = g_structure.n();
  std::vector<graphio::Edge> pairs;
  pairs.reserve(n * (n ? n - 1 : 0) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({i, j});
  const Matrix h = gt_embeddings(model, inputs, g_structure);
  graphio::ScoredEdgeList out;
  out.reserve(pairs.size());
  // Chunks keep the decoder's intermediate matrices small.
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, pairs.size() - start);
    std::span<const graphio::Edge> chunk(pairs.data() + start, len);
    const auto s = link_scores(model, h, chunk);
    for (std::size_t k = 0; k < len; ++k) out.push_back({chunk[k].first, chunk[k].second, s[k]});
  }
  return out;
}

}  // namespace gtgrn::gt
