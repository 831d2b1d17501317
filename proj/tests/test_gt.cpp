#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gtgrn/errors.hpp"
#include "gtgrn/eval/eval.hpp"
#include "gtgrn/graphio/synth.hpp"
#include "gtgrn/gt/gt.hpp"
#include "gtgrn/numcore/random.hpp"
#include "gtgrn/numcore/sym_eig.hpp"
#include "oracles.hpp"

using namespace gtgrn;
using namespace gtgrn::gt;
using graphio::Edge;
using graphio::GeneGraph;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double sd = 1.0) {
  numcore::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = sd * rng.normal();
  return m;
}

GeneGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
  numcore::Rng rng(seed);
  std::vector<Edge> e;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) e.push_back({i, j});
  return GeneGraph(graphio::synthetic_gene_names(n), e);
}

GtConfig tiny_config() {
  GtConfig c;
  c.dim = 4;
  c.heads = 2;
  c.layers = 2;
  c.decoder_hidden = 3;
  return c;
}

GtInputs random_inputs(std::size_t n, std::size_t dz, std::size_t dxi, std::size_t k, std::uint64_t seed) {
  return {random_matrix(n, dz, seed), random_matrix(n, dxi, seed + 1), random_matrix(n, k, seed + 2, 0.3)};
}

void zero_all(GtModel& m, const std::string& prefix) {
  for (std::size_t p = 0; p < m.params.size(); ++p)
    if (m.params[p].name.rfind(prefix, 0) == 0) m.params[p].value.fill(0.0);
}

std::vector<Edge> all_pairs(std::size_t n) {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back({i, j});
  return out;
}

}  // namespace

TEST_CASE("laplacian_pe closed forms") {
  SUBCASE("K2") {
    const auto pe = laplacian_pe(testing::complete_graph(2), 1);
    REQUIRE(pe.eigenvalues.size() == 2);
    CHECK(std::abs(pe.eigenvalues[0]) <= 1e-15);
    CHECK(std::abs(pe.eigenvalues[1] - 2.0) <= 1e-15);
    CHECK(std::abs(pe.lambda(0, 0) - 1.0 / std::sqrt(2.0)) <= 1e-15);
    CHECK(std::abs(pe.lambda(1, 0) + 1.0 / std::sqrt(2.0)) <= 1e-15);
    CHECK(pe.components == 1);
  }
  SUBCASE("K4") {
    const auto pe = laplacian_pe(testing::complete_graph(4), 3);
    CHECK(std::abs(pe.eigenvalues[0]) <= 1e-12);
    for (int k = 1; k < 4; ++k) CHECK(std::abs(pe.eigenvalues[k] - 4.0 / 3.0) <= 1e-12);
  }
  SUBCASE("K_n spectrum") {
    for (std::size_t n = 3; n <= 8; ++n) {
      const auto pe = laplacian_pe(testing::complete_graph(n), n - 1);
      for (std::size_t k = 1; k < n; ++k)
        CHECK(std::abs(pe.eigenvalues[k] - static_cast<double>(n) / static_cast<double>(n - 1)) <= 1e-12);
    }
  }
}

TEST_CASE("laplacian_pe on random graphs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    numcore::Rng rng(seed + 100);
    const std::size_t n = 2 + rng.below(29);
    const double p = rng.uniform(0.02, 0.5);
    const auto g = random_graph(n, p, seed);
    const auto lap = normalized_laplacian(g);
    const auto eig = numcore::sym_eig(lap);
    const auto comps = eval::connected_components(g).count;
    std::size_t trivial = 0;
    for (double ev : eig.eigenvalues) {
      CHECK(ev >= -1e-9);
      CHECK(ev <= 2.0 + 1e-9);
      trivial += ev < 1e-8;
    }
    CHECK(trivial == comps);
    const Matrix gram = numcore::matmul_tn(eig.eigenvectors, eig.eigenvectors);
    double worst = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) worst = std::max(worst, std::abs(gram(a, b) - (a == b ? 1.0 : 0.0)));
    CHECK(worst <= 1e-8);
    if (n - comps >= 1) {
      const auto pe = laplacian_pe(g, std::min<std::size_t>(n - comps, n - 1));
      CHECK(pe.components == comps);
      for (double v : pe.lambda.values()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("laplacian_pe with an isolated node") {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  const GeneGraph g(graphio::synthetic_gene_names(5), e);
  const auto pe = laplacian_pe(g, 3);
  CHECK(pe.components == 2);
  for (double v : pe.lambda.values()) CHECK(std::isfinite(v));
  for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(pe.lambda(4, c)) <= 1e-12);
  try {
    (void)laplacian_pe(g, 4);
    FAIL("expected an error");
  } catch (const ContractError& err) {
    CHECK(std::string(err.what()).find("2 connected components") != std::string::npos);
  }
  CHECK_THROWS_AS(laplacian_pe(g, 5), ContractError);
}

TEST_CASE("fuse_inputs") {
  GtModel m(3, 2, 2, tiny_config(), 1);
  const auto in = random_inputs(5, 3, 2, 2, 2);

  SUBCASE("zero weights leave three times the bias") {
    GtModel z = m;
    for (const char* name : {"proj.expr", "proj.global", "proj.pos"}) {
      z.params.at(std::string(name) + ".w").value.fill(0.0);
      z.params.at(std::string(name) + ".b").value = Matrix{{0.5, -1.0, 2.0, 0.25}};
    }
    const Matrix h = fuse_inputs(z, in);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(h(i, 0) == 1.5);
      CHECK(h(i, 1) == -3.0);
      CHECK(h(i, 2) == 6.0);
      CHECK(h(i, 3) == 0.75);
    }
  }
  SUBCASE("composition oracle") {
    const Matrix h = fuse_inputs(m, in);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 4; ++c) {
        double expect = 0.0;
        const std::pair<const Matrix*, const char*> parts[3] = {
            {&in.expression, "proj.expr"}, {&in.global, "proj.global"}, {&in.positional, "proj.pos"}};
        for (const auto& [x, name] : parts) {
          const Matrix& w = m.params.at(std::string(name) + ".w").value;
          double acc = m.params.at(std::string(name) + ".b").value(0, c);
          for (std::size_t r = 0; r < x->cols(); ++r) acc += (*x)(i, r) * w(r, c);
          expect += acc;
        }
        CHECK(std::abs(h(i, c) - expect) <= 1e-12);
      }
  }
  SUBCASE("ablation drops exactly one contribution") {
    GtModel only_z = m;
    only_z.set_mask({true, false, false});
    GtInputs z_only{in.expression, Matrix(), Matrix()};
    const Matrix hz = fuse_inputs(only_z, z_only);
    numcore::Tape tape;
    const auto direct = numcore::add_row(numcore::matmul(tape.constant(in.expression),
                                                         tape.constant(m.params.at("proj.expr.w").value)),
                                         tape.constant(m.params.at("proj.expr.b").value));
    CHECK(hz == direct.value());

    for (int bits = 1; bits < 8; ++bits) {
      GtModel a = m;
      a.set_mask({bool(bits & 1), bool(bits & 2), bool(bits & 4)});
      const Matrix ha = fuse_inputs(a, in);
      // Same result when the masked inputs are replaced by zeros of any shape.
      GtInputs blanked = in;
      if (!(bits & 1)) blanked.expression = Matrix(5, 3);
      if (!(bits & 2)) blanked.global = Matrix();
      if (!(bits & 4)) blanked.positional = Matrix(1, 7);
      CHECK(fuse_inputs(a, blanked) == ha);
    }
  }
  SUBCASE("errors") {
    GtInputs bad = in;
    bad.global = random_matrix(4, 2, 9);
    CHECK_THROWS_AS(fuse_inputs(m, bad), DimensionError);
    bad = in;
    bad.positional = random_matrix(5, 3, 9);
    CHECK_THROWS_AS(fuse_inputs(m, bad), DimensionError);
    GtModel none = m;
    none.set_mask({false, false, false});
    CHECK_THROWS_AS(fuse_inputs(none, in), ContractError);
  }
}

TEST_CASE("graph attention layer") {
  // Star with center 0 and four leaves, plus isolated node 5.
  std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const GeneGraph g(graphio::synthetic_gene_names(6), e);
  const auto nbrs = graph_neighborhoods(g, true);
  CHECK(nbrs.keys(0).size() == 5);
  CHECK(nbrs.keys(1).size() == 2);
  REQUIRE(nbrs.keys(5).size() == 1);
  CHECK(nbrs.keys(5)[0] == 5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::is_sorted(nbrs.keys(i).begin(), nbrs.keys(i).end()));
  CHECK(graph_neighborhoods(g, false).keys(0).size() == 4);

  GtModel m(3, 2, 2, tiny_config(), 3);
  const Matrix x = random_matrix(6, 4, 4);

  SUBCASE("weights sum to one per node and head") {
    numcore::Tape tape;
    numcore::AttentionWeights w;
    gt_layer_forward(tape, m, 0, nbrs, tape.constant(x), &w);
    CHECK(w.heads == 2);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t k = nbrs.offsets[i]; k < nbrs.offsets[i + 1]; ++k) s += w.values[h * nbrs.entry_count() + k];
        CHECK(std::abs(s - 1.0) <= 1e-9);
      }
    // The isolated node attends only to itself.
    CHECK(w.values[nbrs.offsets[5]] == 1.0);
  }
  SUBCASE("equal keys give uniform attention") {
    m.params.at("layer0.wk").value.fill(0.0);
    numcore::Tape tape;
    numcore::AttentionWeights w;
    gt_layer_forward(tape, m, 0, nbrs, tape.constant(x), &w);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t k = nbrs.offsets[0]; k < nbrs.offsets[1]; ++k)
        CHECK(std::abs(w.values[h * nbrs.entry_count() + k] - 0.2) <= 1e-15);
  }
  SUBCASE("shape errors") {
    numcore::Tape tape;
    CHECK_THROWS_AS(gt_layer_forward(tape, m, 0, nbrs, tape.constant(random_matrix(5, 4, 1))), DimensionError);
    CHECK_THROWS_AS(gt_layer_forward(tape, m, 0, nbrs, tape.constant(random_matrix(6, 3, 1))), DimensionError);
    CHECK_THROWS_AS(gt_layer_forward(tape, m, 2, nbrs, tape.constant(x)), ContractError);
  }
}

TEST_CASE("gradients of the full model match finite differences") {
  const std::vector<Edge> e{{0, 1}, {1, 2}, {2, 3}, {1, 4}};
  const GeneGraph g(graphio::synthetic_gene_names(5), e);
  const auto nbrs = graph_neighborhoods(g, true);
  GtModel m(3, 2, 2, tiny_config(), 5);
  // Nonzero biases so their gradients are exercised away from initialization.
  numcore::Rng rng(6);
  for (std::size_t p = 0; p < m.params.size(); ++p)
    for (double& v : m.params[p].value.values()) v += 0.1 * rng.normal();
  const auto in = random_inputs(5, 3, 2, 2, 7);
  const std::vector<Edge> pairs{{0, 1}, {3, 2}, {0, 4}, {4, 2}, {1, 3}};
  const std::vector<double> labels{1, 1, 0, 0, 1};
  const auto r = testing::check_gradients(m.params, [&](numcore::Tape& t) {
    const auto h = gt_forward(t, m, in, nbrs);
    return numcore::bce_with_logits(pair_logits(t, m, h, pairs), labels);
  });
  CHECK(r.checked == m.params.scalar_count());
  CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst << " " << r.max_rel_error);
  // Every parameter class is present in the check.
  for (const char* name : {"proj.expr.w", "proj.global.b", "proj.pos.w", "layer0.wq", "layer0.wk", "layer0.wv",
                           "layer1.wo", "layer1.ffn1.w", "layer1.ffn2.w", "layer0.ln1.gain", "layer1.ln2.bias",
                           "decoder.w1", "decoder.b1", "decoder.w2", "decoder.b2"})
    CHECK(m.params.contains(name));
}

TEST_CASE("link decoder") {
  GtModel m(3, 2, 2, tiny_config(), 8);
  const Matrix h = random_matrix(6, 4, 9);

  SUBCASE("zero weights score the output bias") {
    zero_all(m, "decoder");
    CHECK(link_score(m, h, 0, 1) == 0.5);
    m.params.at("decoder.b2").value(0, 0) = 0.7;
    CHECK(link_score(m, h, 2, 3) == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-15));
  }
  SUBCASE("symmetric and in range") {
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        if (i == j) continue;
        const double s = link_score(m, h, i, j);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        CHECK(std::abs(s - link_score(m, h, j, i)) <= 1e-15);
      }
    CHECK_THROWS_AS(link_score(m, h, 0, 6), ContractError);
  }
  SUBCASE("hand-sized 2-2-1 network") {
    GtConfig c;
    c.dim = 1;
    c.heads = 1;
    c.layers = 0;
    c.decoder_hidden = 2;
    GtModel s(1, 1, 1, c, 1);
    s.params.at("decoder.w1").value = Matrix{{0.5, -1.0}, {2.0, 0.25}};
    s.params.at("decoder.b1").value = Matrix{{0.1, -0.2}};
    s.params.at("decoder.w2").value = Matrix{{1.5}, {-0.75}};
    s.params.at("decoder.b2").value = Matrix{{0.05}};
    const Matrix hh{{0.8}, {-0.4}};
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    // [0.8, -0.4]: hidden (0.4 - 0.8 + 0.1, -0.8 - 0.1 - 0.2) -> relu (0, 0) -> 0.05
    // [-0.4, 0.8]: hidden (-0.2 + 1.6 + 0.1, 0.4 + 0.2 - 0.2) = (1.5, 0.4) -> 2.25 - 0.3 + 0.05 = 2.0
    const double expect = 0.5 * (sig(0.05) + sig(2.0));
    CHECK(std::abs(link_score(s, hh, 0, 1) - expect) <= 1e-12);
  }
}

TEST_CASE("property: forward pass is permutation equivariant") {
  const auto g = graphio::synth_scale_free_grn(12, 2, 3);
  GtModel m(3, 2, 3, tiny_config(), 10);
  const auto in = random_inputs(12, 3, 2, 3, 11);
  const Matrix h = gt_embeddings(m, in, g);

  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  numcore::Rng rng(12);
  rng.shuffle(std::span<std::size_t>(perm));
  // Node v of the permuted graph is node perm[v] of the original.
  std::vector<std::size_t> inv(12);
  for (std::size_t v = 0; v < 12; ++v) inv[perm[v]] = v;
  std::vector<Edge> pe;
  for (const auto& ed : g.edges()) pe.push_back(graphio::make_edge(inv[ed.first], inv[ed.second]));
  const GeneGraph gp(graphio::synthetic_gene_names(12), pe);
  auto permute = [&](const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t v = 0; v < x.rows(); ++v)
      for (std::size_t c = 0; c < x.cols(); ++c) y(v, c) = x(perm[v], c);
    return y;
  };
  const GtInputs pin{permute(in.expression), permute(in.global), permute(in.positional)};
  const Matrix hp = gt_embeddings(m, pin, gp);
  double worst = 0.0;
  for (std::size_t v = 0; v < 12; ++v)
    for (std::size_t c = 0; c < 4; ++c) worst = std::max(worst, std::abs(hp(v, c) - h(perm[v], c)));
  CHECK(worst <= 1e-9);
}

namespace {

struct Instance {
  GeneGraph truth;
  GeneGraph train;
  graphio::EdgeSplit split;
  GtInputs inputs;
};

// Inputs carry a weak planted signal: genes share a latent direction with
// their neighbors through a smoothed random feature.
Instance make_instance(std::uint64_t seed, bool informative) {
  Instance in;
  in.truth = graphio::synth_scale_free_grn(80, 2, seed);
  in.split = graphio::split_edges(in.truth, {}, 1.0, seed + 1);
  in.train = in.truth.with_edges(in.split.train_pos);
  Matrix base = random_matrix(80, 6, seed + 2);
  Matrix z = base;
  if (informative) {
    for (std::size_t i = 0; i < 80; ++i)
      for (std::size_t j : in.truth.neighbors(i))
        for (std::size_t c = 0; c < 6; ++c) z(i, c) += base(j, c);
  }
  in.inputs = {z, random_matrix(80, 5, seed + 3), laplacian_pe(in.train, 4).lambda};
  return in;
}

GtConfig small_train_config() {
  GtConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.epochs = 60;
  c.lr = 3e-3;
  return c;
}

}  // namespace

TEST_CASE("untrained model scores validation pairs near chance") {
  // Default model on a pipeline-sized graph, so each validation set holds 59 + 59 pairs.
  const GtConfig c;
  std::vector<double> aucs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto truth = graphio::synth_scale_free_grn(200, 3, 100 + seed);
    const auto split = graphio::split_edges(truth, {}, 1.0, 200 + seed);
    const auto train = truth.with_edges(split.train_pos);
    const GtInputs inputs{random_matrix(200, 64, 300 + seed), random_matrix(200, 64, 400 + seed),
                          laplacian_pe(train, 16).lambda};
    GtModel m(64, 64, 16, c, seed);
    std::vector<Edge> pairs(split.val_pos);
    pairs.insert(pairs.end(), split.val_neg.begin(), split.val_neg.end());
    std::vector<char> labels(pairs.size(), 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(split.val_pos.size()), 1);
    const double auc = eval::auroc(score_pairs(m, inputs, train, pairs), labels);
    aucs.push_back(auc);
    // A random model projects the structural inputs onto a random direction,
    // so single seeds scatter wider than pure label noise would.
    CHECK(auc >= 0.30);
    CHECK(auc <= 0.70);
  }
  const double mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / 20.0;
  CHECK(mean >= 0.45);
  CHECK(mean <= 0.55);
}

TEST_CASE("training on a planted instance") {
  const Instance in = make_instance(7, true);
  GtModel m(6, 5, 4, small_train_config(), 1);
  GtModel again = m;
  const auto rep = train_link_prediction(m, in.train, in.split, in.inputs);
  const auto rep2 = train_link_prediction(again, in.train, in.split, in.inputs);
  CHECK(rep.loss == rep2.loss);
  CHECK(rep.val_auroc == rep2.val_auroc);
  CHECK(m.params.values_equal(again.params));
  CHECK(rep.val_auroc.size() == rep.loss.size());
  CHECK(rep.best_val_auroc == *std::max_element(rep.val_auroc.begin(), rep.val_auroc.end()));
  CHECK(rep.loss.back() < rep.loss.front());

  const auto pos = score_pairs(m, in.inputs, in.train, in.split.train_pos);
  auto neg = score_pairs(m, in.inputs, in.train, in.split.train_neg);
  std::sort(neg.begin(), neg.end());
  const double median_neg = neg[neg.size() / 2];
  std::size_t above = 0;
  for (double s : pos) above += s > median_neg;
  CHECK(above * 2 > pos.size());
  CHECK(static_cast<double>(above) / static_cast<double>(pos.size()) >= 0.75);
}

TEST_CASE("held-out target mode: deterministic, learns, rejects bad fractions") {
  const Instance in = make_instance(7, true);
  GtConfig c = small_train_config();
  c.target_fraction = 0.3;
  GtModel m(6, 5, 4, c, 1);
  GtModel again = m;
  const auto rep = train_link_prediction(m, in.train, in.split, in.inputs);
  CHECK(train_link_prediction(again, in.train, in.split, in.inputs).loss == rep.loss);
  CHECK(m.params.values_equal(again.params));
  CHECK(rep.loss.back() < rep.loss.front());

  GtModel plain(6, 5, 4, small_train_config(), 1);
  CHECK(train_link_prediction(plain, in.train, in.split, in.inputs).loss != rep.loss);

  c.target_fraction = 1.5;
  GtModel bad(6, 5, 4, c, 1);
  CHECK_THROWS_AS(train_link_prediction(bad, in.train, in.split, in.inputs), ContractError);
}

TEST_CASE("early stopping restores the best epoch") {
  const Instance in = make_instance(9, true);
  GtConfig c = small_train_config();
  c.epochs = 300;
  c.patience = 3;
  GtModel m(6, 5, 4, c, 2);
  const auto rep = train_link_prediction(m, in.train, in.split, in.inputs);
  REQUIRE(rep.stopped_early);
  CHECK(rep.val_auroc.size() == rep.best_epoch + 1 + 3);
  std::vector<Edge> pairs(in.split.val_pos);
  pairs.insert(pairs.end(), in.split.val_neg.begin(), in.split.val_neg.end());
  std::vector<char> labels(pairs.size(), 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(in.split.val_pos.size()), 1);
  CHECK(eval::auroc(score_pairs(m, in.inputs, in.train, pairs), labels) == rep.best_val_auroc);
}

TEST_CASE("reconstruct_network covers every pair") {
  const auto g = testing::path_graph(4);
  GtModel m(3, 2, 2, tiny_config(), 4);
  const auto in = random_inputs(4, 3, 2, 2, 5);
  const auto scores = reconstruct_network(m, in, g);
  REQUIRE(scores.size() == 6);
  const auto pairs = all_pairs(4);
  const Matrix h = gt_embeddings(m, in, g);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(scores[k].i == pairs[k].first);
    CHECK(scores[k].j == pairs[k].second);
    CHECK(scores[k].score > 0.0);
    CHECK(scores[k].score < 1.0);
    CHECK(scores[k].score == link_score(m, h, pairs[k].first, pairs[k].second));
  }
}

TEST_CASE("checkpoint round trip is exact") {
  GtConfig c = tiny_config();
  c.mask = {true, false, true};
  c.lr = 3e-3;
  GtModel m(3, 2, 2, c, 77);
  numcore::Rng rng(1);
  for (double& v : m.params.at("layer1.wv").value.values()) v = rng.normal() / 3.0;
  const std::string path = "test_gt_checkpoint.json";
  save_checkpoint(m, path);
  const GtModel back = load_checkpoint(path);
  CHECK(back.params.values_equal(m.params));
  CHECK(back.seed() == 77);
  CHECK(back.config().lr == 3e-3);
  CHECK_FALSE(back.config().mask.global);
  CHECK(back.expression_dim() == 3);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("does/not/exist.json"), IoError);
}
