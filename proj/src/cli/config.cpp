#include "gtgrn/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <functional>
#include <limits>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"
#include "gtgrn/numcore/random.hpp"

namespace gtgrn::cli {

namespace {

using nlohmann::json;

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("config " + key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ParseError("config " + key + ": expected a boolean, got '" + text + "'");
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// One registry entry: the text setter and the JSON getter of a field.
struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<json(const PipelineConfig&)> get;
};

// The accessor is generic so one lambda serves the setter and the const getter.
template <typename T, typename Access>
Field make_field(std::string key, Access access) {
  Field f;
  f.key = key;
  f.set = [key, access](PipelineConfig& c, const std::string& text) {
    T& slot = access(c);
    if constexpr (std::is_same_v<T, bool>) {
      slot = parse_bool(key, text);
    } else if constexpr (std::is_same_v<T, double>) {
      slot = graphio::parse_double(trim(text), "config " + key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      slot = text;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      slot = parse_list(text);
    } else {
      const std::uint64_t v = parse_u64(key, trim(text));
      if (v > std::numeric_limits<T>::max()) throw ParseError("config " + key + ": value out of range");
      slot = static_cast<T>(v);
    }
  };
  f.get = [access](const PipelineConfig& c) { return json(access(c)); };
  return f;
}

#define GTGRN_FIELD(type, key, expr) make_field<type>(key, [](auto& c) -> auto& { return c.expr; })

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      GTGRN_FIELD(std::string, "paths.expression", paths.expression),
      GTGRN_FIELD(std::string, "paths.ground_truth", paths.ground_truth),
      GTGRN_FIELD(std::string, "paths.out", paths.out),
      GTGRN_FIELD(std::uint64_t, "seeds.data", seeds.data),
      GTGRN_FIELD(std::uint64_t, "seeds.master", seeds.master),
      GTGRN_FIELD(std::size_t, "synth.genes", synth.genes),
      GTGRN_FIELD(std::size_t, "synth.m_attach", synth.m_attach),
      GTGRN_FIELD(std::size_t, "synth.samples", synth.samples),
      GTGRN_FIELD(double, "synth.noise_sd", synth.noise_sd),
      GTGRN_FIELD(double, "preprocess.min_cell_frac", preprocess.min_cell_frac),
      GTGRN_FIELD(double, "preprocess.alpha", preprocess.alpha),
      GTGRN_FIELD(std::string, "preprocess.variance_test", preprocess.variance_test),
      GTGRN_FIELD(std::vector<std::string>, "ensemble.methods", ensemble.methods),
      GTGRN_FIELD(std::size_t, "ensemble.edges_per_gene", ensemble.edges_per_gene),
      GTGRN_FIELD(double, "ensemble.ridge", ensemble.ridge),
      GTGRN_FIELD(std::size_t, "ensemble.mi_bins", ensemble.mi_bins),
      GTGRN_FIELD(std::size_t, "walks.walks_per_node", walks.walks_per_node),
      GTGRN_FIELD(std::size_t, "walks.length", walks.length),
      GTGRN_FIELD(double, "walks.p_return", walks.p_return),
      GTGRN_FIELD(double, "walks.q_inout", walks.q_inout),
      GTGRN_FIELD(std::size_t, "mlm.dim", mlm.dim),
      GTGRN_FIELD(std::size_t, "mlm.blocks", mlm.blocks),
      GTGRN_FIELD(std::size_t, "mlm.heads", mlm.heads),
      GTGRN_FIELD(std::size_t, "mlm.epochs", mlm.epochs),
      GTGRN_FIELD(std::size_t, "mlm.batch_size", mlm.batch_size),
      GTGRN_FIELD(double, "mlm.lr", mlm.lr),
      GTGRN_FIELD(double, "mlm.mask_rate", mlm.mask_rate),
      GTGRN_FIELD(std::string, "mlm.pe_mode", mlm.pe_mode),
      GTGRN_FIELD(std::size_t, "vae.hidden", vae.hidden),
      GTGRN_FIELD(std::size_t, "vae.latent", vae.latent),
      GTGRN_FIELD(std::size_t, "vae.epochs", vae.epochs),
      GTGRN_FIELD(std::size_t, "vae.batch_size", vae.batch_size),
      GTGRN_FIELD(double, "vae.lr", vae.lr),
      GTGRN_FIELD(bool, "vae.standardize", vae.standardize),
      GTGRN_FIELD(std::size_t, "gt.dim", gt.dim),
      GTGRN_FIELD(std::size_t, "gt.pe_k", gt.pe_k),
      GTGRN_FIELD(std::size_t, "gt.heads", gt.heads),
      GTGRN_FIELD(std::size_t, "gt.layers", gt.layers),
      GTGRN_FIELD(std::size_t, "gt.epochs", gt.epochs),
      GTGRN_FIELD(double, "gt.lr", gt.lr),
      GTGRN_FIELD(std::size_t, "gt.patience", gt.patience),
      GTGRN_FIELD(double, "gt.neg_ratio", gt.neg_ratio),
      GTGRN_FIELD(double, "gt.train_fraction", gt.train_fraction),
      GTGRN_FIELD(double, "gt.val_fraction", gt.val_fraction),
      GTGRN_FIELD(double, "gt.test_fraction", gt.test_fraction),
      GTGRN_FIELD(double, "gt.target_fraction", gt.target_fraction),
      GTGRN_FIELD(bool, "gt.self_loops", gt.self_loops),
      GTGRN_FIELD(bool, "ablation.expression", ablation.expression),
      GTGRN_FIELD(bool, "ablation.global", ablation.global),
      GTGRN_FIELD(bool, "ablation.positional", ablation.positional),
      GTGRN_FIELD(std::size_t, "run.jobs", jobs),
  };
  return fields;
}

#undef GTGRN_FIELD

const Field& find_field(const std::string& key) {
  for (const Field& f : registry())
    if (f.key == key) return f;
  throw ContractError("config: unknown key '" + key + "'");
}

// JSON scalars in their text form; lists join with commas.
std::string json_text(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return graphio::format_double(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (const json& item : v) {
      if (!item.is_string()) throw ParseError("config " + key + ": list items must be strings");
      if (!out.empty()) out += ',';
      out += item.get<std::string>();
    }
    return out;
  }
  throw ParseError("config " + key + ": unsupported value " + v.dump());
}

}  // namespace

void set_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : registry()) keys.push_back(f.key);
  return keys;
}

void apply_ini(PipelineConfig& config, const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("config: " + std::string(e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ParseError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_value(config, section + "." + key, trim(value.data()));
  }
}

void apply_json(PipelineConfig& config, const json& j) {
  const json& root = j.contains("config") && j["config"].is_object() ? j["config"] : j;
  if (!root.is_object()) throw ParseError("config: JSON root must be an object");
  for (const auto& [section, body] : root.items()) {
    if (!body.is_object()) throw ParseError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      const std::string full = section + "." + key;
      set_value(config, full, json_text(full, value));
    }
  }
}

void apply_file(PipelineConfig& config, const std::string& path) {
  const std::string text = graphio::read_text_file(path);
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (!is_json) {
    apply_ini(config, text);
    return;
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  apply_json(config, j);
}

json config_to_json(const PipelineConfig& config) {
  json out = json::object();
  for (const Field& f : registry()) {
    const auto dot = f.key.find('.');
    out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(config);
  }
  return out;
}

void validate(const PipelineConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("config: " + what);
  };
  require(!c.paths.out.empty(), "paths.out must not be empty");
  const std::string& vt = c.preprocess.variance_test;
  require(vt == "auto" || vt == "true" || vt == "false", "preprocess.variance_test must be auto, true or false");
  require(!c.ensemble.methods.empty(), "ensemble.methods must name at least one method");
  for (const std::string& m : c.ensemble.methods) {
    require(m == "pearson" || m == "spearman" || m == "mi_clr" || m == "partial_correlation",
            "unknown ensemble method '" + m + "'");
  }
  require(c.mlm.pe_mode == "add" || c.mlm.pe_mode == "concat", "mlm.pe_mode must be add or concat");
  require(c.mlm.heads > 0 && c.mlm.dim % c.mlm.heads == 0, "mlm.dim must be a multiple of mlm.heads");
  require(c.gt.heads > 0 && c.gt.dim % c.gt.heads == 0, "gt.dim must be a multiple of gt.heads");
  require(c.gt.pe_k > 0, "gt.pe_k must be positive");
  const double total = c.gt.train_fraction + c.gt.val_fraction + c.gt.test_fraction;
  require(c.gt.train_fraction > 0.0 && c.gt.val_fraction >= 0.0 && c.gt.test_fraction > 0.0 &&
              std::abs(total - 1.0) <= 1e-9,
          "gt split fractions must be non-negative, with train and test positive, and sum to 1");
  require(c.gt.target_fraction >= 0.0 && c.gt.target_fraction <= 1.0, "gt.target_fraction must be in [0, 1]");
  require(c.ablation.expression || c.ablation.global || c.ablation.positional,
          "the ablation mask must keep at least one modality");
  require(c.jobs >= 1, "run.jobs must be at least 1");
}

StageSeeds stage_seeds(const SeedConfig& seeds) {
  using numcore::derive_seed;
  StageSeeds s;
  s.synth = derive_seed(seeds.data, {1});
  s.simulate = derive_seed(seeds.data, {2});
  s.walks = derive_seed(seeds.master, {3});
  s.mlm_init = derive_seed(seeds.master, {4});
  s.mlm_train = derive_seed(seeds.master, {5});
  s.vae_init = derive_seed(seeds.master, {6});
  s.vae_train = derive_seed(seeds.master, {7});
  s.split = derive_seed(seeds.master, {8});
  s.gt_init = derive_seed(seeds.master, {9});
  return s;
}

json seeds_to_json(const StageSeeds& s) {
  return {{"synth", s.synth},       {"simulate", s.simulate},   {"walks", s.walks},
          {"mlm_init", s.mlm_init}, {"mlm_train", s.mlm_train}, {"vae_init", s.vae_init},
          {"vae_train", s.vae_train}, {"split", s.split},       {"gt_init", s.gt_init}};
}

}  // namespace gtgrn::cli
