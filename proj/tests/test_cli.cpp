#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>

#include <unistd.h>

#include "doctest.h"
#include "gtgrn/cli/config.hpp"
#include "gtgrn/cli/pipeline.hpp"
#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"
#include "gtgrn/graphio/synth.hpp"
#include "gtgrn/numcore/random.hpp"

using namespace gtgrn;
using namespace gtgrn::cli;
namespace fs = std::filesystem;

namespace {

// Fresh directory per call, removed when the guard goes away.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("gtgrn_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// A few seconds end to end: 40 genes, short training everywhere.
PipelineConfig tiny_config(const std::string& out) {
  PipelineConfig c;
  c.paths.out = out;
  c.synth.genes = 40;
  c.synth.samples = 60;
  c.walks.walks_per_node = 3;
  c.walks.length = 8;
  c.mlm.dim = 8;
  c.mlm.heads = 2;
  c.mlm.blocks = 1;
  c.mlm.epochs = 2;
  c.vae.hidden = 16;
  c.vae.latent = 4;
  c.vae.epochs = 5;
  c.gt.dim = 8;
  c.gt.heads = 2;
  c.gt.layers = 1;
  c.gt.pe_k = 4;
  c.gt.epochs = 6;
  return c;
}

std::set<fs::path> files_under(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) out.insert(e.path());
  return out;
}

}  // namespace

TEST_CASE("config: INI sections set typed fields") {
  PipelineConfig c;
  apply_ini(c,
            "# comment\n[seeds]\nmaster = 9\n[gt]\nlr = 0.003\nlayers=6\nself_loops = false\n"
            "[ensemble]\nmethods = pearson, mi_clr\n[paths]\nout = somewhere\n");
  CHECK(c.seeds.master == 9);
  CHECK(c.gt.lr == 0.003);
  CHECK(c.gt.layers == 6);
  CHECK_FALSE(c.gt.self_loops);
  CHECK(c.ensemble.methods == std::vector<std::string>{"pearson", "mi_clr"});
  CHECK(c.paths.out == "somewhere");
  CHECK(c.gt.heads == 4);
}

TEST_CASE("config: malformed input is rejected with the key") {
  PipelineConfig c;
  CHECK_THROWS_AS(apply_ini(c, "[gt]\nbogus = 1\n"), ContractError);
  CHECK_THROWS_WITH_AS(apply_ini(c, "[gt]\nlayers = four\n"), doctest::Contains("gt.layers"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "[gt]\nlayers = -1\n"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "[gt]\nself_loops = maybe\n"), ParseError);
  CHECK_THROWS_AS(apply_ini(c, "[gt\nlayers = 4\n"), ParseError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"gt": 3})")), ParseError);
}

TEST_CASE("config: JSON echo round-trips every key exactly") {
  PipelineConfig c;
  c.gt.lr = 0.1 + 0.2;  // not representable in short decimal
  c.seeds.master = 18446744073709551615ULL;
  c.ensemble.methods = {"spearman"};
  c.preprocess.variance_test = "true";
  const nlohmann::json echo = config_to_json(c);
  PipelineConfig back;
  apply_json(back, nlohmann::json::parse(echo.dump()));
  CHECK(config_to_json(back) == echo);
  CHECK(back.gt.lr == c.gt.lr);
  CHECK(back.seeds.master == c.seeds.master);

  std::size_t n = 0;
  for (const auto& [section, body] : echo.items()) n += body.size();
  CHECK(n == config_keys().size());

  // A full report is accepted as a config source.
  PipelineConfig from_report;
  apply_json(from_report, nlohmann::json{{"config", echo}, {"results", {{"x", 1}}}});
  CHECK(config_to_json(from_report) == echo);
}

TEST_CASE("config: file precedence, later sources win") {
  TempDir dir;
  graphio::write_text_atomic(dir.file("a.ini"), "[gt]\nheads = 8\nlayers = 6\n");
  graphio::write_text_atomic(dir.file("b.json"), R"({"gt": {"layers": 8}})");
  PipelineConfig c;
  apply_file(c, dir.file("a.ini"));
  apply_file(c, dir.file("b.json"));
  set_value(c, "gt.heads", "2");
  CHECK(c.gt.heads == 2);
  CHECK(c.gt.layers == 8);
  CHECK(c.gt.lr == 1e-3);
  CHECK_THROWS_AS(apply_file(c, dir.file("missing.ini")), IoError);
}

TEST_CASE("config: validation catches inconsistent settings") {
  PipelineConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    CHECK_THROWS_AS(validate(c), ContractError);
  };
  bad([](PipelineConfig& c) { c.gt.train_fraction = 0.9; });
  bad([](PipelineConfig& c) { c.gt.heads = 5; });
  bad([](PipelineConfig& c) { c.ensemble.methods = {"aracne"}; });
  bad([](PipelineConfig& c) { c.preprocess.variance_test = "sometimes"; });
  bad([](PipelineConfig& c) { c.ablation = {false, false, false}; });
  bad([](PipelineConfig& c) { c.jobs = 0; });
}

TEST_CASE("seeds: every stage gets a distinct seed; data and model sides are independent") {
  SeedConfig s;
  const StageSeeds a = stage_seeds(s);
  const std::set<std::uint64_t> all = {a.synth,    a.simulate,  a.walks, a.mlm_init, a.mlm_train,
                                       a.vae_init, a.vae_train, a.split, a.gt_init};
  CHECK(all.size() == 9);
  s.master += 1;
  const StageSeeds b = stage_seeds(s);
  CHECK(b.synth == a.synth);
  CHECK(b.simulate == a.simulate);
  CHECK(b.gt_init != a.gt_init);
  CHECK(b.walks != a.walks);
}

TEST_CASE("embeddings TSV round-trips bitwise and checks the gene order") {
  TempDir dir;
  numcore::Rng rng(3);
  numcore::Matrix m(5, 3);
  for (double& v : m.values()) v = rng.normal() * 1e-7 + rng.uniform();
  const auto genes = graphio::synthetic_gene_names(5);
  save_embeddings(m, genes, dir.file("e.tsv"));
  const numcore::Matrix back = load_embeddings(dir.file("e.tsv"), genes);
  CHECK(back.rows() == 5);
  CHECK(back.cols() == 3);
  CHECK(std::equal(back.values().begin(), back.values().end(), m.values().begin()));

  auto other = genes;
  std::swap(other[0], other[1]);
  CHECK_THROWS_AS(load_embeddings(dir.file("e.tsv"), other), ContractError);
  CHECK_THROWS_AS(load_embeddings(dir.file("e.tsv"), graphio::synthetic_gene_names(6)), ContractError);
  graphio::write_text_atomic(dir.file("bad.tsv"), "gene\td0\nG000\t1\t2\n");
  CHECK_THROWS_AS(load_embeddings(dir.file("bad.tsv"), {"G000"}), ParseError);
  CHECK_THROWS_AS(save_embeddings(m, {"a"}, dir.file("x.tsv")), DimensionError);
}

TEST_CASE("standardize_rows: zero mean, unit sample variance, constant rows zero") {
  numcore::Matrix m(3, 4);
  const double rows[3][4] = {{1, 2, 3, 4}, {5, 5, 5, 5}, {0, 10, 0, 10}};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) m(r, c) = rows[r][c];
  const numcore::Matrix s = standardize_rows(m);
  for (std::size_t r : {0u, 2u}) {
    double mean = 0, ss = 0;
    for (std::size_t c = 0; c < 4; ++c) mean += s(r, c);
    for (std::size_t c = 0; c < 4; ++c) ss += s(r, c) * s(r, c);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(ss / 3.0 - 1.0) < 1e-12);
  }
  for (std::size_t c = 0; c < 4; ++c) CHECK(s(1, c) == 0.0);
}

TEST_CASE("grid: 27 cells, the tuned value lists, distinct derived seeds") {
  const auto cells = grid_cells(123);
  REQUIRE(cells.size() == 27);
  std::set<std::uint64_t> seeds;
  std::set<std::tuple<double, std::size_t, std::size_t>> combos;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    CHECK(cells[k].index == k);
    CHECK(cells[k].seed == numcore::derive_seed(123, {k}));
    seeds.insert(cells[k].seed);
    combos.insert({cells[k].lr, cells[k].heads, cells[k].layers});
    CHECK((cells[k].lr == 0.001 || cells[k].lr == 0.003 || cells[k].lr == 0.0005));
    CHECK((cells[k].heads == 2 || cells[k].heads == 4 || cells[k].heads == 8));
    CHECK((cells[k].layers == 4 || cells[k].layers == 6 || cells[k].layers == 8));
  }
  CHECK(seeds.size() == 27);
  CHECK(combos.size() == 27);
}

TEST_CASE("ablation: the seven non-empty modality subsets") {
  const auto masks = ablation_masks();
  REQUIRE(masks.size() == 7);
  std::set<std::string> labels;
  for (const auto& m : masks) {
    CHECK(m.any());
    labels.insert(m.label());
  }
  CHECK(labels.size() == 7);
  CHECK(masks.back().expression);
  CHECK(masks.back().global);
  CHECK(masks.back().positional);
}

TEST_CASE("synth: files parse back, repeat byte-identically, edge count per generator") {
  TempDir a, b;
  PipelineConfig c = tiny_config(a.path.string());
  c.synth.genes = 200;
  c.synth.samples = 300;
  run_command("synth", c);
  c.paths.out = b.path.string();
  run_command("synth", c);
  for (const char* f : {"expression.tsv", "ground_truth.tsv"})
    CHECK(graphio::read_text_file(a.file(f)) == graphio::read_text_file(b.file(f)));
  const auto x = graphio::load_expression_tsv(a.file("expression.tsv"));
  CHECK(x.genes() == 200);
  CHECK(x.samples() == 300);
  const auto g = graphio::load_edge_list(a.file("ground_truth.tsv"), false);
  CHECK(g.graph.edge_count() == 3 + (200 - 3) * 3);
}

TEST_CASE("run-all: complete report, replay from the echo reproduces every result") {
  TempDir dir;
  const PipelineConfig c = tiny_config(dir.file("run"));
  const nlohmann::json report = run_command("run-all", c);
  for (const char* key : {"config", "seeds", "results", "timings", "artifacts"}) CHECK(report.contains(key));
  const auto& test = report["results"]["metrics"]["test"];
  CHECK(test["auroc"].get<double>() >= 0.0);
  CHECK(test["auroc"].get<double>() <= 1.0);
  CHECK(report["results"].contains("stats"));
  CHECK(report["results"]["gt"]["loss"].size() >= 1);
  CHECK(report["timings"].contains("total"));

  // Every artifact lives inside the output directory and exists.
  for (const auto& [key, path] : report["artifacts"].items()) {
    const fs::path p = path.get<std::string>();
    CHECK(fs::exists(p));
    CHECK(fs::weakly_canonical(p).parent_path() == fs::weakly_canonical(dir.file("run")));
  }

  PipelineConfig replay;
  apply_file(replay, dir.file("run/report.json"));
  const nlohmann::json again = run_command("run-all", replay);
  CHECK(again["results"] == report["results"]);
  CHECK(again["config"] == report["config"]);
  CHECK(again["seeds"] == report["seeds"]);
}

TEST_CASE("subcommands chain through the output directory and agree with run-all") {
  TempDir dir;
  const PipelineConfig c = tiny_config(dir.file("steps"));
  const std::set<fs::path> before = files_under(dir.path.parent_path());
  for (const char* cmd : {"synth", "preprocess", "ensemble", "embed-global", "embed-expr", "train", "evaluate",
                          "stats"})
    run_command(cmd, c);
  const nlohmann::json evaluated = nlohmann::json::parse(graphio::read_text_file(dir.file("steps/evaluate_report.json")));
  const nlohmann::json stats = nlohmann::json::parse(graphio::read_text_file(dir.file("steps/stats_report.json")));

  PipelineConfig whole = c;
  whole.paths.out = dir.file("whole");
  const nlohmann::json all = run_command("run-all", whole);
  CHECK(all["results"]["metrics"] == evaluated["results"]["metrics"]);
  CHECK(all["results"]["stats"] == stats["results"]["stats"]);

  // Nothing was created next to the temporary directory.
  std::set<fs::path> after = files_under(dir.path.parent_path());
  for (const fs::path& p : after) {
    if (before.count(p)) continue;
    const auto rel = fs::relative(p, dir.path);
    CHECK_MESSAGE(!rel.empty(), p.string());
    CHECK_MESSAGE(rel.native().rfind("..", 0) != 0, p.string());
  }
}

TEST_CASE("ablate and grid: row counts, ranges, shared split") {
  TempDir dir;
  PipelineConfig c = tiny_config(dir.file("abl"));
  c.gt.epochs = 3;
  c.jobs = 3;
  for (const char* cmd : {"synth", "preprocess", "ensemble", "embed-global", "embed-expr"}) run_command(cmd, c);
  const nlohmann::json ab = run_command("ablate", c);
  REQUIRE(ab["results"]["ablation"].size() == 7);
  for (const auto& row : ab["results"]["ablation"]) {
    CHECK(row["auroc"].get<double>() >= 0.0);
    CHECK(row["auroc"].get<double>() <= 1.0);
  }
  const std::string csv = graphio::read_text_file(dir.file("abl/ablation.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);

  const nlohmann::json grid = run_command("grid", c);
  CHECK(grid["results"]["grid"]["cells"].size() == 27);
  std::set<std::uint64_t> seeds;
  for (const auto& cell : grid["results"]["grid"]["cells"]) seeds.insert(cell["seed"].get<std::uint64_t>());
  CHECK(seeds.size() == 27);
  const auto& box = grid["results"]["grid"]["summary"]["test_auroc"];
  CHECK(box["min"].get<double>() <= box["median"].get<double>());
  CHECK(box["median"].get<double>() <= box["max"].get<double>());
  CHECK(fs::exists(dir.file("abl/grid_summary.json")));

  // The job count does not change the numbers.
  c.jobs = 1;
  const nlohmann::json serial = run_command("ablate", c);
  CHECK(serial["results"]["ablation"] == ab["results"]["ablation"]);
}

TEST_CASE("failures name the stage and keep earlier artifacts") {
  TempDir dir;
  const PipelineConfig c = tiny_config(dir.file("fail"));
  CHECK_THROWS_WITH_AS(run_command("train", c), doctest::Contains("stage load"), StageError);
  run_command("synth", c);
  try {
    run_command("ensemble", c);
    FAIL("expected a failure");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
  }
  CHECK(fs::exists(dir.file("fail/expression.tsv")));
  CHECK_THROWS_AS(run_command("frobnicate", c), ContractError);

  PipelineConfig user = c;
  user.paths.expression = dir.file("fail/expression.tsv");
  run_command("preprocess", user);
  const auto pre = nlohmann::json::parse(graphio::read_text_file(dir.file("fail/preprocess_report.json")));
  CHECK(pre["results"]["preprocess"]["variance_test"].get<bool>());
  CHECK_THROWS_WITH_AS(run_command("train", user), doctest::Contains("ground_truth"), StageError);
}
