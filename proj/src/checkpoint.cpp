#include <fstream>

#include <json.hpp>

#include "synlm/error.hpp"
#include "synlm/training.hpp"

namespace synlm {

namespace {

constexpr const char* kFormat = "synlm-checkpoint";
constexpr int kVersion = 1;

nlohmann::json config_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},         {"n_layers", c.n_layers},       {"n_heads", c.n_heads},
          {"d_ff", c.d_ff},               {"d_comp", c.d_comp},           {"comp_layers", c.comp_layers},
          {"comp_heads", c.comp_heads},   {"max_seq_len", c.max_seq_len}, {"max_children", c.max_children},
          {"seed", c.seed}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.d_ff = j.at("d_ff");
  c.d_comp = j.at("d_comp");
  c.comp_layers = j.at("comp_layers");
  c.comp_heads = j.at("comp_heads");
  c.max_seq_len = j.at("max_seq_len");
  c.max_children = j.at("max_children");
  c.seed = j.at("seed");
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const WordVocabulary& vocab, int step) {
  if (model.tokens() != vocab.size()) {
    throw ConfigError("model has " + std::to_string(model.tokens()) + " tokens but the vocabulary has " +
                      std::to_string(vocab.size()));
  }
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["model_config"] = config_json(model.config());
  j["scheme"] = {{"name", model.scheme().name},
                 {"width1_starts", model.scheme().width1_starts},
                 {"mask_open_positions", model.scheme().mask_open_positions}};
  j["vocab"] = vocab.words();
  j["step"] = step;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : model.params()) {
    params[name] = {{"rows", p.value.rows()},
                    {"cols", p.value.cols()},
                    {"data", std::vector<double>(p.value.data(), p.value.data() + p.value.size())}};
  }
  j["params"] = std::move(params);
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  os << j.dump();
  if (!os) throw ConfigError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format") != kFormat) throw ParseError("not a checkpoint file: " + path);
    if (j.at("version") != kVersion) throw ParseError("unsupported checkpoint version in " + path);
    Checkpoint ck;
    const auto words = j.at("vocab").get<std::vector<std::string>>();
    ck.vocab = WordVocabulary::from_words(words);
    ck.vocab.freeze();
    ModelScheme scheme = ModelScheme::parse(j.at("scheme").at("name").get<std::string>());
    scheme.width1_starts = j.at("scheme").at("width1_starts");
    scheme.mask_open_positions = j.at("scheme").at("mask_open_positions");
    ck.model = std::make_unique<Model>(config_from(j.at("model_config")), scheme, ck.vocab.size());
    ck.step = j.at("step");
    const auto& params = j.at("params");
    if (params.size() != ck.model->params().size()) throw ParseError("checkpoint parameter set does not match");
    for (auto& [name, p] : ck.model->params()) {
      const auto& e = params.at(name);
      if (e.at("rows") != p.value.rows() || e.at("cols") != p.value.cols()) {
        throw ParseError("checkpoint parameter " + name + " has the wrong shape");
      }
      const auto data = e.at("data").get<std::vector<double>>();
      if (static_cast<long>(data.size()) != p.value.size()) throw ParseError("checkpoint parameter " + name + " is truncated");
      std::copy(data.begin(), data.end(), p.value.data());
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace synlm
