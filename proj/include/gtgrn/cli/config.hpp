#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace gtgrn::cli {

struct PathsConfig {
  /// Expression TSV; empty means the synthetic instance written by `synth`.
  std::string expression;
  /// Reference edge list; empty means the synthetic ground truth.
  std::string ground_truth;
  std::string out = "gtgrn_out";
};

struct SeedConfig {
  /// Synthetic network and expression simulation.
  std::uint64_t data = 7;
  /// Every model-side stage derives its seed from this one.
  std::uint64_t master = 42;
};

struct SynthConfig {
  std::size_t genes = 200;
  std::size_t m_attach = 3;
  std::size_t samples = 300;
  double noise_sd = 0.25;
};

struct PreprocessConfig {
  double min_cell_frac = 0.10;
  double alpha = 0.01;
  /// "auto" runs the variance test only on user-supplied expression.
  std::string variance_test = "auto";
};

struct EnsembleConfig {
  std::vector<std::string> methods{"pearson", "mi_clr", "partial_correlation"};
  std::size_t edges_per_gene = 3;
  double ridge = 1e-3;
  std::size_t mi_bins = 0;
};

struct WalkConfig {
  std::size_t walks_per_node = 10;
  std::size_t length = 20;
  double p_return = 1.0;
  double q_inout = 1.0;
};

struct MlmStageConfig {
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double mask_rate = 0.20;
  std::string pe_mode = "add";
};

struct VaeStageConfig {
  std::size_t hidden = 128;
  std::size_t latent = 64;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  /// Per-gene z-scoring of the log-expression profile before encoding.
  bool standardize = true;
};

struct GtStageConfig {
  std::size_t dim = 64;
  std::size_t pe_k = 16;
  std::size_t heads = 4;
  std::size_t layers = 4;
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t patience = 10;
  double neg_ratio = 1.0;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  double target_fraction = 0.0;
  bool self_loops = true;
};

struct AblationConfig {
  bool expression = true;
  bool global = true;
  bool positional = true;
};

struct PipelineConfig {
  PathsConfig paths;
  SeedConfig seeds;
  SynthConfig synth;
  PreprocessConfig preprocess;
  EnsembleConfig ensemble;
  WalkConfig walks;
  MlmStageConfig mlm;
  VaeStageConfig vae;
  GtStageConfig gt;
  AblationConfig ablation;
  std::size_t jobs = 1;
};

/// Sets "section.key" from its text form. Throws ContractError for unknown
/// keys and ParseError for malformed values.
void set_value(PipelineConfig& config, const std::string& key, const std::string& value);

/// Every key in registry order.
std::vector<std::string> config_keys();

/// INI-style text ("[section]" headers, "key = value" lines, '#' or ';' comments).
void apply_ini(PipelineConfig& config, const std::string& text);
/// {"section": {"key": value}}. A run report is accepted too (its "config" member is used).
void apply_json(PipelineConfig& config, const nlohmann::json& j);
/// Dispatches on the extension (.json, otherwise INI).
void apply_file(PipelineConfig& config, const std::string& path);

/// Nested JSON with every key, suitable for apply_json.
nlohmann::json config_to_json(const PipelineConfig& config);

/// Rejects settings that are individually valid but inconsistent together, and unknown method tags.
void validate(const PipelineConfig& config);

/// Resolved per-stage seeds, derived deterministically from the seed section.
struct StageSeeds {
  std::uint64_t synth = 0;
  std::uint64_t simulate = 0;
  std::uint64_t walks = 0;
  std::uint64_t mlm_init = 0;
  std::uint64_t mlm_train = 0;
  std::uint64_t vae_init = 0;
  std::uint64_t vae_train = 0;
  std::uint64_t split = 0;
  std::uint64_t gt_init = 0;
};
StageSeeds stage_seeds(const SeedConfig& seeds);
nlohmann::json seeds_to_json(const StageSeeds& s);

}  // namespace gtgrn::cli
