#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gtgrn/cli/config.hpp"
#include "gtgrn/ensemble/ensemble.hpp"
#include "gtgrn/errors.hpp"
#include "gtgrn/eval/eval.hpp"
#include "gtgrn/graphio/expression.hpp"
#include "gtgrn/graphio/graph.hpp"
#include "gtgrn/graphio/split.hpp"
#include "gtgrn/gt/gt.hpp"

namespace gtgrn::cli {

/// A pipeline stage failed; the message leads with the stage name.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : Error("stage " + stage + ": " + cause), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// "gene\t<dim0>\t..." header, then one row per gene at round-trip precision.
std::string format_embeddings(const numcore::Matrix& m, const std::vector<std::string>& genes);
void save_embeddings(const numcore::Matrix& m, const std::vector<std::string>& genes, const std::string& path);
/// Rows must name exactly `genes` in order. Throws IoError, ParseError or ContractError.
numcore::Matrix load_embeddings(const std::string& path, const std::vector<std::string>& genes);

/// Rows z-scored (sample standard deviation); constant rows become zero.
numcore::Matrix standardize_rows(const numcore::Matrix& m);

/// Everything the link-prediction stages share: the split, the graph the
/// model may see, and the three per-gene inputs.
struct GtProblem {
  graphio::GeneGraph truth;
  graphio::EdgeSplit split;
  graphio::GeneGraph train_graph;
  gt::GtInputs inputs;
  std::vector<double> pe_eigenvalues;
};

struct SplitMetrics {
  eval::RankingMetrics train;
  std::optional<eval::RankingMetrics> val;
  eval::RankingMetrics test;
  /// |Pearson| of the preprocessed expression on the same test pairs.
  eval::RankingMetrics pearson_test;
  eval::RankingMetrics full_reconstruction;
  /// Every pair scored with message passing over the training graph.
  graphio::ScoredEdgeList reconstruction;
};

struct AblationRow {
  gt::ModalityMask mask;
  eval::RankingMetrics test;
  std::size_t best_epoch = 0;
  double best_val_auroc = 0.0;
};

struct GridCell {
  std::size_t index = 0;
  double lr = 0.0;
  std::size_t heads = 0;
  std::size_t layers = 0;
  std::uint64_t seed = 0;
  double best_val_auroc = 0.0;
  std::size_t best_epoch = 0;
  eval::RankingMetrics test;
};

/// The 27 (lr, heads, layers) cells in lr-major order.
std::vector<GridCell> grid_cells(std::uint64_t gt_seed);

/// Seven non-empty modality subsets: three unimodal, three bimodal, trimodal.
std::vector<gt::ModalityMask> ablation_masks();

/// Orchestrates the stages against one output directory. Every stage writes
/// its artifacts atomically under paths.out and records its numbers, timing
/// and artifact paths for the report. Timings are kept apart from results so
/// reports can be compared for determinism.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const noexcept { return config_; }
  const StageSeeds& seeds() const noexcept { return seeds_; }
  /// A file inside the output directory.
  std::string out_path(const std::string& name) const;

  // Stages.
  struct SynthData {
    graphio::GeneGraph truth;
    graphio::ExpressionMatrix expression;
  };
  SynthData synth();
  graphio::PreprocessResult preprocess(const graphio::ExpressionMatrix& raw);
  std::vector<ensemble::InferredNetwork> infer_networks(const graphio::ExpressionMatrix& x);
  numcore::Matrix embed_global(const std::vector<graphio::GeneGraph>& networks);
  numcore::Matrix embed_expression(const graphio::ExpressionMatrix& x);
  GtProblem prepare(const graphio::GeneGraph& truth, const numcore::Matrix& expression_embedding,
                    const numcore::Matrix& global_embedding);
  gt::GtModel train(const GtProblem& problem);
  SplitMetrics evaluate(gt::GtModel& model, const GtProblem& problem, const graphio::ExpressionMatrix& x);
  void stats(const graphio::GeneGraph& truth, const graphio::ScoredEdgeList& reconstruction);
  std::vector<AblationRow> ablate(const GtProblem& problem);
  std::vector<GridCell> grid(const GtProblem& problem);

  /// The full chain in memory; returns the report (also written to report.json).
  nlohmann::json run_all();

  // Inputs of standalone subcommands, read back from the output directory.
  graphio::ExpressionMatrix load_raw_expression() const;
  graphio::ExpressionMatrix load_preprocessed() const;
  std::vector<graphio::GeneGraph> load_networks(const std::vector<std::string>& genes) const;
  numcore::Matrix load_embedding(const std::string& name, const std::vector<std::string>& genes) const;
  /// Reference network over `genes`; edges to unknown genes are dropped.
  graphio::GeneGraph load_truth(const std::vector<std::string>& genes) const;
  gt::GtModel load_model() const;
  graphio::ScoredEdgeList load_reconstruction(const graphio::GeneGraph& genes) const;

  /// Config echo, resolved seeds, results, timings and artifacts.
  nlohmann::json report(const std::string& command) const;
  /// Writes report(command) to `file` in the output directory and returns it.
  nlohmann::json write_report(const std::string& command, const std::string& file);

  /// Runs `f` as stage `name`: timed, and failures rethrown as StageError.
  template <typename F>
  auto stage(const std::string& name, F&& f) -> decltype(f());

 private:
  void record_timing(const std::string& name, double seconds);
  void record_artifact(const std::string& key, const std::string& file);
  bool variance_test_enabled() const;

  PipelineConfig config_;
  StageSeeds seeds_;
  std::filesystem::path out_;
  nlohmann::json results_ = nlohmann::json::object();
  nlohmann::json timings_ = nlohmann::json::object();
  nlohmann::json artifacts_ = nlohmann::json::object();
};

double seconds_since(std::uint64_t start_ns);
std::uint64_t now_ns();

template <typename F>
auto Pipeline::stage(const std::string& name, F&& f) -> decltype(f()) {
  const std::uint64_t start = now_ns();
  struct Timer {
    Pipeline* self;
    const std::string& name;
    std::uint64_t start;
    ~Timer() { self->record_timing(name, seconds_since(start)); }
  } timer{this, name, start};
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

/// Subcommand names in the order the tool lists them.
const std::vector<std::string>& command_names();

/// Runs one subcommand, reading earlier artifacts from the output directory
/// where needed. Returns the written report.
nlohmann::json run_command(const std::string& command, const PipelineConfig& config);

}  // namespace gtgrn::cli
