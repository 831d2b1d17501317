#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gtgrn/errors.hpp"
#include "gtgrn/graphio/files.hpp"
#include "gtgrn/gt/gt.hpp"

namespace gtgrn::gt {

namespace {

constexpr const char* kFormat = "gtgrn-gt-checkpoint";
constexpr int kVersion = 1;

}  // namespace

void save_checkpoint(const GtModel& model, const std::string& path) {
  const GtConfig& c = model.config();
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["seed"] = model.seed();
  j["input_dims"] = {model.expression_dim(), model.global_dim(), model.positional_dim()};
  j["config"] = {{"dim", c.dim},
                 {"heads", c.heads},
                 {"layers", c.layers},
                 {"ffn_hidden", c.ffn_hidden},
                 {"decoder_hidden", c.decoder_hidden},
                 {"self_loops", c.self_loops},
                 {"ln_eps", c.ln_eps},
                 {"epochs", c.epochs},
                 {"lr", c.lr},
                 {"patience", c.patience},
                 {"mask", {c.mask.expression, c.mask.global, c.mask.positional}}};
  auto& arr = j["params"] = nlohmann::json::array();
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    const auto& p = model.params[k];
    arr.push_back({{"name", p.name},
                   {"rows", p.value.rows()},
                   {"cols", p.value.cols()},
                   {"values", std::vector<double>(p.value.values().begin(), p.value.values().end())}});
  }
  graphio::write_text_atomic(path, j.dump());
}

GtModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw ParseError("load_checkpoint: " + path + " is not a GT checkpoint");
    if (j.at("version") != kVersion) {
      throw ParseError("load_checkpoint: unsupported checkpoint version " + j.at("version").dump());
    }
    const auto& jc = j.at("config");
    GtConfig c;
    c.dim = jc.at("dim");
    c.heads = jc.at("heads");
    c.layers = jc.at("layers");
    c.ffn_hidden = jc.at("ffn_hidden");
    c.decoder_hidden = jc.at("decoder_hidden");
    c.self_loops = jc.at("self_loops");
    c.ln_eps = jc.at("ln_eps");
    c.epochs = jc.at("epochs");
    c.lr = jc.at("lr");
    c.patience = jc.at("patience");
    c.mask = {jc.at("mask").at(0), jc.at("mask").at(1), jc.at("mask").at(2)};
    const auto& dims = j.at("input_dims");
    GtModel model(dims.at(0), dims.at(1), dims.at(2), c, j.at("seed").get<std::uint64_t>());
    const auto& arr = j.at("params");
    if (arr.size() != model.params.size()) throw ParseError("load_checkpoint: parameter count mismatch");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      auto& p = model.params[k];
      const auto& e = arr[k];
      if (e.at("name") != p.name || e.at("rows") != p.value.rows() || e.at("cols") != p.value.cols()) {
        throw ParseError("load_checkpoint: parameter " + e.at("name").dump() + " does not match " + p.name + " " +
                         p.value.shape_string());
      }
      const auto values = e.at("values").get<std::vector<double>>();
      if (values.size() != p.value.size()) throw ParseError("load_checkpoint: wrong value count for " + p.name);
      std::copy(values.begin(), values.end(), p.value.values().begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + path + ": " + e.what());
  }
}

}  // namespace gtgrn::gt
