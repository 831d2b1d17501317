#include "gtgrn/cli/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <string_view>
#include <thread>

#include "gtgrn/graphio/files.hpp"
#include "gtgrn/graphio/synth.hpp"
#include "gtgrn/mlm/mlm.hpp"
#include "gtgrn/numcore/random.hpp"
#include "gtgrn/vae/vae.hpp"
#include "gtgrn/walks/walks.hpp"

namespace gtgrn::cli {

using graphio::Edge;
using graphio::GeneGraph;
using numcore::Matrix;
using nlohmann::json;

std::uint64_t now_ns() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

double seconds_since(std::uint64_t start_ns) { return static_cast<double>(now_ns() - start_ns) * 1e-9; }

std::string format_embeddings(const Matrix& m, const std::vector<std::string>& genes) {
  if (m.rows() != genes.size()) {
    throw DimensionError("format_embeddings: " + std::to_string(m.rows()) + " rows for " +
                         std::to_string(genes.size()) + " genes");
  }
  std::string out = "gene";
  for (std::size_t c = 0; c < m.cols(); ++c) out += "\td" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += genes[r];
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out += '\t';
      out += graphio::format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

void save_embeddings(const Matrix& m, const std::vector<std::string>& genes, const std::string& path) {
  graphio::write_text_atomic(path, format_embeddings(m, genes));
}

Matrix load_embeddings(const std::string& path, const std::vector<std::string>& genes) {
  const std::string text = graphio::read_text_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto fields = graphio::split_fields(line);
    if (fields.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (header) {
      if (fields[0] != "gene") throw ParseError(where + ": expected a header starting with 'gene'");
      width = fields.size() - 1;
      header = false;
      continue;
    }
    if (fields.size() != width + 1) {
      throw ParseError(where + ": expected " + std::to_string(width + 1) + " fields, got " +
                       std::to_string(fields.size()));
    }
    const std::size_t r = rows.size();
    if (r >= genes.size() || fields[0] != genes[r]) {
      throw ContractError(where + ": gene '" + std::string(fields[0]) + "' does not match the expected gene order");
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) row[c] = graphio::parse_double(fields[c + 1], where);
    rows.push_back(std::move(row));
  }
  if (header) throw ParseError(path + ": missing header");
  if (rows.size() != genes.size()) {
    throw ContractError(path + ": " + std::to_string(rows.size()) + " rows for " + std::to_string(genes.size()) +
                        " genes");
  }
  Matrix m(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) m(r, c) = rows[r][c];
  return m;
}

Matrix standardize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  if (m.cols() < 2) return out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) mean += m(r, c);
    mean /= static_cast<double>(m.cols());
    double ss = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) ss += (m(r, c) - mean) * (m(r, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(m.cols() - 1));
    if (!(sd > 0.0)) continue;
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = (m(r, c) - mean) / sd;
  }
  return out;
}

std::vector<GridCell> grid_cells(std::uint64_t gt_seed) {
  const double lrs[] = {0.001, 0.003, 0.0005};
  const std::size_t heads[] = {2, 4, 8};
  const std::size_t layers[] = {4, 6, 8};
  std::vector<GridCell> cells;
  for (double lr : lrs)
    for (std::size_t h : heads)
      for (std::size_t l : layers) {
        GridCell c;
        c.index = cells.size();
        c.lr = lr;
        c.heads = h;
        c.layers = l;
        c.seed = numcore::derive_seed(gt_seed, {c.index});
        cells.push_back(c);
      }
  return cells;
}

std::vector<gt::ModalityMask> ablation_masks() {
  return {{true, false, false}, {false, true, false}, {false, false, true}, {true, true, false},
          {true, false, true},  {false, true, true},  {true, true, true}};
}

namespace {

json metrics_json(const eval::RankingMetrics& m) {
  return {{"auroc", m.auroc}, {"auprc", m.auprc}, {"n_pos", m.n_pos}, {"n_neg", m.n_neg}};
}

json stats_json(const eval::NetworkStats& s) {
  json j = {{"max_degree", s.max_degree},
            {"triangle_count", s.triangle_count},
            {"clustering_coefficient", s.clustering_coefficient},
            {"largest_component", s.largest_component},
            {"components", s.components}};
  j["assortativity"] = s.assortativity ? json(*s.assortativity) : json(nullptr);
  j["characteristic_path_length"] =
      s.characteristic_path_length ? json(*s.characteristic_path_length) : json(nullptr);
  return j;
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  for (const std::string& c : cells) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out + '\n';
}

std::string num(double v) { return graphio::format_double(v); }
std::string num(std::size_t v) { return std::to_string(v); }

// Pairs of one split: positives first, then negatives.
struct LabeledPairs {
  std::vector<Edge> pairs;
  std::vector<char> labels;
};

LabeledPairs labeled(const std::vector<Edge>& pos, const std::vector<Edge>& neg) {
  LabeledPairs out;
  out.pairs = pos;
  out.pairs.insert(out.pairs.end(), neg.begin(), neg.end());
  out.labels.assign(out.pairs.size(), 0);
  std::fill(out.labels.begin(), out.labels.begin() + static_cast<std::ptrdiff_t>(pos.size()), 1);
  return out;
}

eval::RankingMetrics score_split(gt::GtModel& model, const GtProblem& p, const LabeledPairs& lp) {
  const std::vector<double> s = gt::score_pairs(model, p.inputs, p.train_graph, lp.pairs);
  return eval::ranking_metrics(s, lp.labels);
}

// Runs body(i) for i in [0, count) on up to `jobs` threads. Each index is
// independent, so results do not depend on the job count. The first failure
// by index is rethrown after every worker has finished.
template <typename F>
void parallel_for(std::size_t count, std::size_t jobs, F body) {
  std::vector<std::exception_ptr> errors(count);
  auto run = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json box_summary(const std::vector<double>& v) {
  return {{"min", quantile(v, 0.0)},
          {"q1", quantile(v, 0.25)},
          {"median", quantile(v, 0.5)},
          {"q3", quantile(v, 0.75)},
          {"max", quantile(v, 1.0)}};
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  validate(config_);
  seeds_ = stage_seeds(config_.seeds);
  out_ = config_.paths.out;
  std::error_code ec;
  std::filesystem::create_directories(out_, ec);
  if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
}

std::string Pipeline::out_path(const std::string& name) const { return (out_ / name).string(); }

void Pipeline::record_timing(const std::string& name, double seconds) { timings_[name] = seconds; }

void Pipeline::record_artifact(const std::string& key, const std::string& file) { artifacts_[key] = out_path(file); }

bool Pipeline::variance_test_enabled() const {
  const std::string& v = config_.preprocess.variance_test;
  if (v == "auto") return !config_.paths.expression.empty();
  return v == "true";
}

Pipeline::SynthData Pipeline::synth() {
  return stage("synth", [&] {
    SynthData d;
    const SynthConfig& s = config_.synth;
    d.truth = graphio::synth_scale_free_grn(s.genes, s.m_attach, seeds_.synth);
    d.expression = graphio::simulate_expression(d.truth, s.samples, s.noise_sd, seeds_.simulate);
    graphio::save_expression_tsv(d.expression, out_path("expression.tsv"));
    graphio::save_edge_list(d.truth, out_path("ground_truth.tsv"));
    record_artifact("expression", "expression.tsv");
    record_artifact("ground_truth", "ground_truth.tsv");
    results_["synth"] = {{"genes", d.truth.n()}, {"edges", d.truth.edge_count()}, {"samples", s.samples}};
    return d;
  });
}

graphio::PreprocessResult Pipeline::preprocess(const graphio::ExpressionMatrix& raw) {
  return stage("preprocess", [&] {
    graphio::PreprocessOptions options;
    options.min_cell_frac = config_.preprocess.min_cell_frac;
    options.alpha = config_.preprocess.alpha;
    options.variance_test = variance_test_enabled();
    graphio::PreprocessResult r = graphio::preprocess_expression(raw, options);
    graphio::save_expression_tsv(r.matrix, out_path("preprocessed.tsv"));
    record_artifact("preprocessed", "preprocessed.tsv");
    const graphio::PreprocessReport& rep = r.report;
    results_["preprocess"] = {{"variance_test", options.variance_test},
                              {"input_genes", rep.input_genes},
                              {"output_genes", rep.output_genes},
                              {"samples", r.matrix.samples()},
                              {"dropped_low_expression", rep.dropped_low_expression},
                              {"dropped_variance", rep.dropped_variance},
                              {"median_variance", rep.median_variance},
                              {"degrees_of_freedom", rep.degrees_of_freedom}};
    return r;
  });
}

std::vector<ensemble::InferredNetwork> Pipeline::infer_networks(const graphio::ExpressionMatrix& x) {
  return stage("ensemble", [&] {
    ensemble::EnsembleOptions options;
    options.methods = config_.ensemble.methods;
    options.edges_per_gene = config_.ensemble.edges_per_gene;
    options.ridge = config_.ensemble.ridge;
    options.mi_bins = config_.ensemble.mi_bins;
    options.parallel = config_.jobs > 1;
    std::vector<ensemble::InferredNetwork> nets = ensemble::infer_ensemble(x, options);
    json summary = json::array();
    for (const auto& net : nets) {
      const std::string net_file = "network_" + net.method_tag + ".tsv";
      const std::string score_file = "scores_" + net.method_tag + ".tsv";
      graphio::save_edge_list(net.binarized, out_path(net_file));
      graphio::save_scores(net.scores, x.gene_names, out_path(score_file));
      record_artifact("network_" + net.method_tag, net_file);
      record_artifact("scores_" + net.method_tag, score_file);
      summary.push_back({{"method", net.method_tag}, {"edges", net.binarized.edge_count()}});
    }
    results_["ensemble"] = {{"networks", summary}, {"edges_per_gene", options.edges_per_gene}};
    return nets;
  });
}

Matrix Pipeline::embed_global(const std::vector<GeneGraph>& networks) {
  return stage("embed-global", [&] {
    if (networks.empty()) throw ContractError("no input networks");
    walks::WalkOptions wo;
    wo.walks_per_node = config_.walks.walks_per_node;
    wo.length = config_.walks.length;
    wo.p_return = config_.walks.p_return;
    wo.q_inout = config_.walks.q_inout;
    wo.jobs = config_.jobs;
    const walks::WalkCorpus corpus = walks::generate_walks(networks, wo, seeds_.walks);
    const walks::Vocabulary vocab(networks.front().gene_names());
    graphio::write_text_atomic(out_path("walks.txt"), walks::format_corpus(corpus, vocab));
    record_artifact("walks", "walks.txt");

    mlm::MlmConfig mc;
    mc.dim = config_.mlm.dim;
    mc.blocks = config_.mlm.blocks;
    mc.heads = config_.mlm.heads;
    mc.epochs = config_.mlm.epochs;
    mc.batch_size = config_.mlm.batch_size;
    mc.lr = config_.mlm.lr;
    mc.mask_rate = config_.mlm.mask_rate;
    mc.pe_mode = config_.mlm.pe_mode == "concat" ? walks::PeMode::concat : walks::PeMode::add;
    mlm::MlmModel model(vocab.size(), corpus.seq_len, mc, seeds_.mlm_init);
    const mlm::MlmTrainReport rep = mlm::train_mlm(model, corpus, seeds_.mlm_train);
    const double acc = mlm::masked_accuracy(model, corpus, numcore::derive_seed(seeds_.mlm_train, {1}));
    Matrix xi = mlm::extract_global_embeddings(model);

    save_embeddings(xi, vocab.gene_names(), out_path("global_embeddings.tsv"));
    std::string curve = "epoch,loss,accuracy\n";
    for (std::size_t e = 0; e < rep.loss.size(); ++e)
      curve += csv_row({num(e + 1), num(rep.loss[e]), num(rep.accuracy[e])});
    graphio::write_text_atomic(out_path("mlm_curve.csv"), curve);
    record_artifact("global_embeddings", "global_embeddings.tsv");
    record_artifact("mlm_curve", "mlm_curve.csv");
    results_["mlm"] = {{"sequences", corpus.size()}, {"seq_len", corpus.seq_len}, {"vocab", vocab.size()},
                       {"loss", rep.loss},          {"accuracy", rep.accuracy}, {"masked_accuracy", acc}};
    return xi;
  });
}

Matrix Pipeline::embed_expression(const graphio::ExpressionMatrix& x) {
  return stage("embed-expr", [&] {
    graphio::ExpressionMatrix input = x;
    if (config_.vae.standardize) input.values = standardize_rows(x.values);
    vae::VaeConfig vc;
    vc.hidden = config_.vae.hidden;
    vc.latent = config_.vae.latent;
    vc.epochs = config_.vae.epochs;
    vc.batch_size = config_.vae.batch_size;
    vc.lr = config_.vae.lr;
    vae::VaeModel model(input.samples(), vc, seeds_.vae_init);
    const vae::VaeTrainReport rep = vae::train_vae(model, input, seeds_.vae_train);
    Matrix z = vae::extract_expression_embeddings(model, input.values);

    const Matrix recon = vae::reconstruct(model, input.values);
    double mse = 0.0, mean = 0.0, var = 0.0;
    const auto& v = input.values.values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double d = v[k] - recon.values()[k];
      mse += d * d;
      mean += v[k];
    }
    const double count = static_cast<double>(std::max<std::size_t>(v.size(), 1));
    mse /= count;
    mean /= count;
    for (double a : v) var += (a - mean) * (a - mean);
    var /= count;

    save_embeddings(z, x.gene_names, out_path("expression_embeddings.tsv"));
    std::string curve = "epoch,loss,recon,kl\n";
    for (std::size_t e = 0; e < rep.loss.size(); ++e)
      curve += csv_row({num(e + 1), num(rep.loss[e]), num(rep.recon[e]), num(rep.kl[e])});
    graphio::write_text_atomic(out_path("vae_curve.csv"), curve);
    record_artifact("expression_embeddings", "expression_embeddings.tsv");
    record_artifact("vae_curve", "vae_curve.csv");
    results_["vae"] = {{"standardized_input", config_.vae.standardize},
                       {"loss", rep.loss},
                       {"recon", rep.recon},
                       {"kl", rep.kl},
                       {"reconstruction_mse", mse},
                       {"input_variance", var}};
    return z;
  });
}

GtProblem Pipeline::prepare(const GeneGraph& truth, const Matrix& expression_embedding,
                            const Matrix& global_embedding) {
  return stage("split", [&] {
    const std::size_t n = truth.n();
    if (expression_embedding.rows() != n || global_embedding.rows() != n) {
      throw DimensionError("embeddings have " + std::to_string(expression_embedding.rows()) + " and " +
                           std::to_string(global_embedding.rows()) + " rows for " + std::to_string(n) + " genes");
    }
    GtProblem p;
    p.truth = truth;
    const graphio::SplitFractions fractions{config_.gt.train_fraction, config_.gt.val_fraction,
                                            config_.gt.test_fraction};
    p.split = graphio::split_edges(truth, fractions, config_.gt.neg_ratio, seeds_.split);
    p.train_graph = truth.with_edges(p.split.train_pos);
    gt::LaplacianPE pe = gt::laplacian_pe(p.train_graph, config_.gt.pe_k);
    p.inputs = {expression_embedding, global_embedding, std::move(pe.lambda)};
    p.pe_eigenvalues = std::move(pe.eigenvalues);

    std::string text = "subset\tlabel\tgene_a\tgene_b\n";
    auto dump = [&](const char* subset, const char* label, const std::vector<Edge>& edges) {
      for (const Edge& e : edges)
        text += std::string(subset) + '\t' + label + '\t' + truth.gene_name(e.first) + '\t' +
                truth.gene_name(e.second) + '\n';
    };
    dump("train", "1", p.split.train_pos);
    dump("train", "0", p.split.train_neg);
    dump("val", "1", p.split.val_pos);
    dump("val", "0", p.split.val_neg);
    dump("test", "1", p.split.test_pos);
    dump("test", "0", p.split.test_neg);
    graphio::write_text_atomic(out_path("split.tsv"), text);
    record_artifact("split", "split.tsv");
    results_["split"] = {{"genes", n},
                         {"edges", truth.edge_count()},
                         {"train_pos", p.split.train_pos.size()},
                         {"val_pos", p.split.val_pos.size()},
                         {"test_pos", p.split.test_pos.size()},
                         {"train_neg", p.split.train_neg.size()},
                         {"val_neg", p.split.val_neg.size()},
                         {"test_neg", p.split.test_neg.size()},
                         {"pe_k", config_.gt.pe_k}};
    return p;
  });
}

namespace {

gt::GtConfig gt_config(const GtStageConfig& g, const AblationConfig& a) {
  gt::GtConfig c;
  c.dim = g.dim;
  c.heads = g.heads;
  c.layers = g.layers;
  c.epochs = g.epochs;
  c.lr = g.lr;
  c.patience = g.patience;
  c.self_loops = g.self_loops;
  c.target_fraction = g.target_fraction;
  c.mask = {a.expression, a.global, a.positional};
  return c;
}

gt::GtModel make_model(const GtProblem& p, const gt::GtConfig& c, std::uint64_t seed) {
  return gt::GtModel(p.inputs.expression.cols(), p.inputs.global.cols(), p.inputs.positional.cols(), c, seed);
}

}  // namespace

gt::GtModel Pipeline::train(const GtProblem& problem) {
  return stage("train", [&] {
    gt::GtModel model = make_model(problem, gt_config(config_.gt, config_.ablation), seeds_.gt_init);
    const gt::GtTrainReport rep = gt::train_link_prediction(model, problem.train_graph, problem.split, problem.inputs);
    gt::save_checkpoint(model, out_path("gt_checkpoint.json"));
    std::string curve = "epoch,loss,val_auroc\n";
    for (std::size_t e = 0; e < rep.loss.size(); ++e) {
      const std::string val = e < rep.val_auroc.size() ? num(rep.val_auroc[e]) : std::string();
      curve += csv_row({num(e + 1), num(rep.loss[e]), val});
    }
    graphio::write_text_atomic(out_path("gt_curve.csv"), curve);
    record_artifact("gt_checkpoint", "gt_checkpoint.json");
    record_artifact("gt_curve", "gt_curve.csv");
    results_["gt"] = {{"modalities", model.config().mask.label()},
                      {"parameters", model.params.scalar_count()},
                      {"epochs_run", rep.loss.size()},
                      {"best_epoch", rep.best_epoch},
                      {"best_val_auroc", rep.best_val_auroc},
                      {"stopped_early", rep.stopped_early},
                      {"loss", rep.loss},
                      {"val_auroc", rep.val_auroc}};
    return model;
  });
}

SplitMetrics Pipeline::evaluate(gt::GtModel& model, const GtProblem& p, const graphio::ExpressionMatrix& x) {
  return stage("evaluate", [&] {
    if (x.genes() != p.truth.n()) throw DimensionError("expression matrix and reference disagree on gene count");
    SplitMetrics m;
    m.train = score_split(model, p, labeled(p.split.train_pos, p.split.train_neg));
    if (!p.split.val_pos.empty() && !p.split.val_neg.empty())
      m.val = score_split(model, p, labeled(p.split.val_pos, p.split.val_neg));
    const LabeledPairs test = labeled(p.split.test_pos, p.split.test_neg);
    m.test = score_split(model, p, test);

    const Matrix corr = ensemble::correlation_matrix(x.values, ensemble::CorrelationKind::pearson);
    std::vector<double> baseline;
    baseline.reserve(test.pairs.size());
    for (const Edge& e : test.pairs) baseline.push_back(std::abs(corr(e.first, e.second)));
    m.pearson_test = eval::ranking_metrics(baseline, test.labels);

    m.reconstruction = gt::reconstruct_network(model, p.inputs, p.train_graph);
    m.full_reconstruction = eval::full_reconstruction_eval(m.reconstruction, p.truth);
    graphio::save_scores(m.reconstruction, p.truth.gene_names(), out_path("reconstruction.tsv"));
    record_artifact("reconstruction", "reconstruction.tsv");

    results_["metrics"] = {{"train", metrics_json(m.train)},
                           {"val", m.val ? metrics_json(*m.val) : json(nullptr)},
                           {"test", metrics_json(m.test)},
                           {"pearson_test", metrics_json(m.pearson_test)},
                           {"test_auroc_margin_over_pearson", m.test.auroc - m.pearson_test.auroc},
                           {"full_reconstruction", metrics_json(m.full_reconstruction)}};
    return m;
  });
}

void Pipeline::stats(const GeneGraph& truth, const graphio::ScoredEdgeList& reconstruction) {
  stage("stats", [&] {
    const GeneGraph generated = ensemble::binarize_topk(reconstruction, truth.edge_count(), truth.gene_names());
    graphio::save_edge_list(generated, out_path("generated_network.tsv"));
    eval::save_degree_distribution(truth, out_path("degree_reference.csv"));
    eval::save_degree_distribution(generated, out_path("degree_generated.csv"));
    record_artifact("generated_network", "generated_network.tsv");
    record_artifact("degree_reference", "degree_reference.csv");
    record_artifact("degree_generated", "degree_generated.csv");
    const eval::NetworkStats ref = eval::network_stats(truth);
    const eval::NetworkStats gen = eval::network_stats(generated);
    json pcc = nullptr;
    if (ref.assortativity && gen.assortativity && ref.characteristic_path_length && gen.characteristic_path_length)
      pcc = eval::stats_pcc(ref, gen);
    results_["stats"] = {{"reference", stats_json(ref)}, {"generated", stats_json(gen)}, {"pcc", pcc}};
  });
}

std::vector<AblationRow> Pipeline::ablate(const GtProblem& p) {
  return stage("ablate", [&] {
    const std::vector<gt::ModalityMask> masks = ablation_masks();
    std::vector<AblationRow> rows(masks.size());
    const LabeledPairs test = labeled(p.split.test_pos, p.split.test_neg);
    parallel_for(masks.size(), config_.jobs, [&](std::size_t k) {
      gt::GtConfig c = gt_config(config_.gt, config_.ablation);
      c.mask = masks[k];
      gt::GtModel model = make_model(p, c, seeds_.gt_init);
      const gt::GtTrainReport rep = gt::train_link_prediction(model, p.train_graph, p.split, p.inputs);
      rows[k] = {masks[k], score_split(model, p, test), rep.best_epoch, rep.best_val_auroc};
    });
    std::string csv = "feature_set,auroc,auprc,best_epoch,best_val_auroc\n";
    json table = json::array();
    for (const AblationRow& r : rows) {
      csv += csv_row({r.mask.label(), num(r.test.auroc), num(r.test.auprc), num(r.best_epoch), num(r.best_val_auroc)});
      table.push_back({{"feature_set", r.mask.label()},
                       {"auroc", r.test.auroc},
                       {"auprc", r.test.auprc},
                       {"best_epoch", r.best_epoch},
                       {"best_val_auroc", r.best_val_auroc}});
    }
    graphio::write_text_atomic(out_path("ablation.csv"), csv);
    record_artifact("ablation", "ablation.csv");
    results_["ablation"] = table;
    return rows;
  });
}

std::vector<GridCell> Pipeline::grid(const GtProblem& p) {
  return stage("grid", [&] {
    std::vector<GridCell> cells = grid_cells(seeds_.gt_init);
    const LabeledPairs test = labeled(p.split.test_pos, p.split.test_neg);
    parallel_for(cells.size(), config_.jobs, [&](std::size_t k) {
      GridCell& cell = cells[k];
      gt::GtConfig c = gt_config(config_.gt, config_.ablation);
      c.lr = cell.lr;
      c.heads = cell.heads;
      c.layers = cell.layers;
      if (c.dim % c.heads != 0) throw ContractError("gt.dim must be a multiple of every grid head count");
      gt::GtModel model = make_model(p, c, cell.seed);
      const gt::GtTrainReport rep = gt::train_link_prediction(model, p.train_graph, p.split, p.inputs);
      cell.best_val_auroc = rep.best_val_auroc;
      cell.best_epoch = rep.best_epoch;
      cell.test = score_split(model, p, test);
    });
    std::string csv = "cell,lr,heads,layers,seed,best_val_auroc,best_epoch,test_auroc,test_auprc\n";
    json rows = json::array();
    std::vector<double> test_auroc, val_auroc;
    for (const GridCell& c : cells) {
      csv += csv_row({num(c.index), num(c.lr), num(c.heads), num(c.layers), std::to_string(c.seed),
                      num(c.best_val_auroc), num(c.best_epoch), num(c.test.auroc), num(c.test.auprc)});
      rows.push_back({{"cell", c.index},
                      {"lr", c.lr},
                      {"heads", c.heads},
                      {"layers", c.layers},
                      {"seed", c.seed},
                      {"best_val_auroc", c.best_val_auroc},
                      {"best_epoch", c.best_epoch},
                      {"test_auroc", c.test.auroc},
                      {"test_auprc", c.test.auprc}});
      test_auroc.push_back(c.test.auroc);
      val_auroc.push_back(c.best_val_auroc);
    }
    const json summary = {{"cells", cells.size()},
                          {"test_auroc", box_summary(test_auroc)},
                          {"best_val_auroc", box_summary(val_auroc)}};
    graphio::write_text_atomic(out_path("grid.csv"), csv);
    graphio::write_text_atomic(out_path("grid_summary.json"), summary.dump(2) + "\n");
    record_artifact("grid", "grid.csv");
    record_artifact("grid_summary", "grid_summary.json");
    results_["grid"] = {{"summary", summary}, {"cells", rows}};
    return cells;
  });
}

graphio::ExpressionMatrix Pipeline::load_raw_expression() const {
  const std::string path =
      config_.paths.expression.empty() ? out_path("expression.tsv") : config_.paths.expression;
  return graphio::load_expression_tsv(path);
}

graphio::ExpressionMatrix Pipeline::load_preprocessed() const {
  return graphio::load_expression_tsv(out_path("preprocessed.tsv"));
}

std::vector<GeneGraph> Pipeline::load_networks(const std::vector<std::string>& genes) const {
  std::vector<GeneGraph> nets;
  for (const std::string& tag : config_.ensemble.methods) {
    const graphio::LoadedGraph g = graphio::load_edge_list(out_path("network_" + tag + ".tsv"), false);
    nets.push_back(graphio::reindex(g.graph, genes));
  }
  return nets;
}

Matrix Pipeline::load_embedding(const std::string& name, const std::vector<std::string>& genes) const {
  return load_embeddings(out_path(name), genes);
}

GeneGraph Pipeline::load_truth(const std::vector<std::string>& genes) const {
  std::string path = config_.paths.ground_truth;
  if (path.empty()) {
    if (!config_.paths.expression.empty())
      throw ContractError("paths.ground_truth is required with a user-supplied expression matrix");
    path = out_path("ground_truth.tsv");
  }
  return graphio::reindex(graphio::load_edge_list(path, false).graph, genes);
}

gt::GtModel Pipeline::load_model() const { return gt::load_checkpoint(out_path("gt_checkpoint.json")); }

graphio::ScoredEdgeList Pipeline::load_reconstruction(const GeneGraph& genes) const {
  return graphio::load_scores(out_path("reconstruction.tsv"), genes);
}

json Pipeline::report(const std::string& command) const {
  return {{"format", "gtgrn-report"},
          {"version", 1},
          {"command", command},
          {"config", config_to_json(config_)},
          {"seeds", seeds_to_json(seeds_)},
          {"results", results_},
          {"timings", timings_},
          {"artifacts", artifacts_}};
}

json Pipeline::write_report(const std::string& command, const std::string& file) {
  json r = report(command);
  r["artifacts"]["report"] = out_path(file);
  graphio::write_text_atomic(out_path(file), r.dump(2) + "\n");
  return r;
}

json Pipeline::run_all() {
  const std::uint64_t start = now_ns();
  graphio::ExpressionMatrix raw;
  std::optional<GeneGraph> synthetic_truth;
  if (config_.paths.expression.empty()) {
    SynthData d = synth();
    raw = std::move(d.expression);
    synthetic_truth = std::move(d.truth);
  } else {
    raw = stage("load", [&] { return load_raw_expression(); });
  }
  const graphio::PreprocessResult pp = preprocess(raw);
  const std::vector<std::string>& genes = pp.matrix.gene_names;
  const std::vector<ensemble::InferredNetwork> nets = infer_networks(pp.matrix);
  std::vector<GeneGraph> graphs;
  for (const auto& n : nets) graphs.push_back(n.binarized);
  const Matrix xi = embed_global(graphs);
  const Matrix z = embed_expression(pp.matrix);
  const GeneGraph truth = stage("reference", [&] {
    if (synthetic_truth && config_.paths.ground_truth.empty()) return graphio::reindex(*synthetic_truth, genes);
    return load_truth(genes);
  });
  const GtProblem problem = prepare(truth, z, xi);
  gt::GtModel model = train(problem);
  const SplitMetrics metrics = evaluate(model, problem, pp.matrix);
  stats(truth, metrics.reconstruction);
  record_timing("total", seconds_since(start));
  return write_report("run-all", "report.json");
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth",    "preprocess", "ensemble", "embed-global",
                                                 "embed-expr", "train",    "evaluate", "stats",
                                                 "ablate",   "grid",       "run-all"};
  return names;
}

json run_command(const std::string& command, const PipelineConfig& config) {
  Pipeline p(config);
  if (command == "run-all") return p.run_all();

  auto problem = [&](const graphio::ExpressionMatrix& x) {
    const GeneGraph truth = p.stage("reference", [&] { return p.load_truth(x.gene_names); });
    const Matrix z = p.stage("load", [&] { return p.load_embedding("expression_embeddings.tsv", x.gene_names); });
    const Matrix xi = p.stage("load", [&] { return p.load_embedding("global_embeddings.tsv", x.gene_names); });
    return p.prepare(truth, z, xi);
  };
  auto preprocessed = [&] { return p.stage("load", [&] { return p.load_preprocessed(); }); };

  if (command == "synth") {
    p.synth();
  } else if (command == "preprocess") {
    p.preprocess(p.stage("load", [&] { return p.load_raw_expression(); }));
  } else if (command == "ensemble") {
    p.infer_networks(preprocessed());
  } else if (command == "embed-global") {
    const graphio::ExpressionMatrix x = preprocessed();
    p.embed_global(p.stage("load", [&] { return p.load_networks(x.gene_names); }));
  } else if (command == "embed-expr") {
    p.embed_expression(preprocessed());
  } else if (command == "train") {
    p.train(problem(preprocessed()));
  } else if (command == "evaluate") {
    const graphio::ExpressionMatrix x = preprocessed();
    const GtProblem prob = problem(x);
    gt::GtModel model = p.stage("load", [&] { return p.load_model(); });
    p.evaluate(model, prob, x);
  } else if (command == "stats") {
    const graphio::ExpressionMatrix x = preprocessed();
    const GeneGraph truth = p.stage("reference", [&] { return p.load_truth(x.gene_names); });
    p.stats(truth, p.stage("load", [&] { return p.load_reconstruction(truth); }));
  } else if (command == "ablate") {
    p.ablate(problem(preprocessed()));
  } else if (command == "grid") {
    p.grid(problem(preprocessed()));
  } else {
    throw ContractError("unknown command '" + command + "'");
  }
  return p.write_report(command, command + "_report.json");
}

}  // namespace gtgrn::cli
