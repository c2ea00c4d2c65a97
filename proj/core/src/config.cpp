#include "hcmen/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hcmen/error.hpp"
#include "json.hpp"

namespace hcmen {

namespace {

using nlohmann::json;

std::string mode_name(CorruptionMode mode) {
  return mode == CorruptionMode::Token ? "token" : "modality";
}

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError("invalid config field '" + std::string(field) + "': " + what);
}

json to_json(const ModelConfig& c) {
  return json{{"seq_len", c.seq_len},
              {"model_dim", c.model_dim},
              {"state_dim", c.state_dim},
              {"inner_dim", c.inner_dim},
              {"fusion_depth", c.fusion_depth},
              {"mamba_conv_width", c.mamba_conv_width},
              {"proj_width", c.proj_width},
              {"conv_width", c.conv_width},
              {"encoder_depth", c.encoder_depth},
              {"mix_threshold", c.mix_threshold},
              {"temperature", c.temperature},
              {"alpha", c.alpha},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"missing_rate", c.missing_rate},
              {"seed", c.seed},
              {"disable_cnn", c.disable_cnn},
              {"disable_mamba", c.disable_mamba},
              {"disable_cmea", c.disable_cmea},
              {"corruption_mode", mode_name(c.corruption_mode)},
              {"substitute_noise", c.substitute_noise},
              {"input_dims", c.input_dims}};
}

template <typename V>
std::function<void(const json&)> setter(const char* key, V& target) {
  return [key, &target](const json& value) {
    try {
      if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
        if (!value.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
      } else if constexpr (std::is_same_v<V, double>) {
        if (!value.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<V, bool>) {
        if (!value.is_boolean()) throw ConfigError("expected true or false");
      }
      target = value.get<V>();
    } catch (const ConfigError& e) {
      throw ConfigError("invalid config field '" + std::string(key) + "': " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError("invalid config field '" + std::string(key) + "': " + e.what());
    }
  };
}

}  // namespace

void ModelConfig::validate() const {
  require(seq_len > 0, "seq_len", "must be positive");
  require(model_dim > 0, "model_dim", "must be positive");
  require(state_dim > 0, "state_dim", "must be positive");
  require(inner_dim > 0, "inner_dim", "must be positive");
  require(fusion_depth > 0, "fusion_depth", "must be positive");
  require(mamba_conv_width > 0, "mamba_conv_width", "must be positive");
  require(proj_width % 2 == 1, "proj_width", "must be odd");
  require(conv_width % 2 == 1, "conv_width", "must be odd");
  require(encoder_depth > 0, "encoder_depth", "must be positive");
  require(mix_threshold >= 0.0 && mix_threshold <= 1.0, "mix_threshold", "must lie in [0, 1]");
  require(temperature > 0.0, "temperature", "must be positive");
  require(alpha >= 0.0, "alpha", "must be non-negative");
  require(learning_rate > 0.0, "learning_rate", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(missing_rate >= 0.0 && missing_rate <= 1.0, "missing_rate", "must lie in [0, 1]");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) { return to_json(a) == to_json(b); }

std::string config_to_json(const ModelConfig& config, int indent) {
  return to_json(config).dump(indent);
}

ModelConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  ModelConfig c;
  std::string mode = mode_name(c.corruption_mode);
  const std::map<std::string, std::function<void(const json&)>> fields{
      {"seq_len", setter("seq_len", c.seq_len)},
      {"model_dim", setter("model_dim", c.model_dim)},
      {"state_dim", setter("state_dim", c.state_dim)},
      {"inner_dim", setter("inner_dim", c.inner_dim)},
      {"fusion_depth", setter("fusion_depth", c.fusion_depth)},
      {"mamba_conv_width", setter("mamba_conv_width", c.mamba_conv_width)},
      {"proj_width", setter("proj_width", c.proj_width)},
      {"conv_width", setter("conv_width", c.conv_width)},
      {"encoder_depth", setter("encoder_depth", c.encoder_depth)},
      {"mix_threshold", setter("mix_threshold", c.mix_threshold)},
      {"temperature", setter("temperature", c.temperature)},
      {"alpha", setter("alpha", c.alpha)},
      {"learning_rate", setter("learning_rate", c.learning_rate)},
      {"batch_size", setter("batch_size", c.batch_size)},
      {"epochs", setter("epochs", c.epochs)},
      {"missing_rate", setter("missing_rate", c.missing_rate)},
      {"seed", setter("seed", c.seed)},
      {"disable_cnn", setter("disable_cnn", c.disable_cnn)},
      {"disable_mamba", setter("disable_mamba", c.disable_mamba)},
      {"disable_cmea", setter("disable_cmea", c.disable_cmea)},
      {"corruption_mode", setter("corruption_mode", mode)},
      {"substitute_noise", setter("substitute_noise", c.substitute_noise)},
      {"input_dims", setter("input_dims", c.input_dims)},
  };
  for (const auto& [key, value] : doc.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown config field '" + key + "'");
    it->second(value);
  }
  if (mode == "token") {
    c.corruption_mode = CorruptionMode::Token;
  } else if (mode == "modality") {
    c.corruption_mode = CorruptionMode::WholeModality;
  } else {
    throw ConfigError("invalid config field 'corruption_mode': expected \"token\" or \"modality\"");
  }
  c.validate();
  return c;
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace hcmen
