#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "dcm/errors.hpp"
#include "dcm/trainer.hpp"

namespace dcm::train {

std::string Toggles::pattern() const {
  std::string s;
  for (bool b : {ddscm, dfre, ffm, bca}) s.push_back(b ? '1' : '0');
  return s;
}

Toggles Toggles::from_pattern(std::string_view bits) {
  if (bits.size() != 4 || bits.find_first_not_of("01") != std::string_view::npos) {
    throw ParameterError("toggle pattern '" + std::string(bits) + "' must be four 0/1 digits (DDSCM DFRE ATT BCA)");
  }
  return {bits[0] == '1', bits[1] == '1', bits[2] == '1', bits[3] == '1'};
}

void TrainConfig::validate() const {
  auto fail = [](const char* key, const std::string& why) { throw ConfigError(key, std::string(key) + ": " + why); };
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr", "must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2", "must lie in [0, 1)");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (crop < nn::DiscriminatorImpl::kReceptiveField || crop % 4 != 0) {
    fail("crop", "must be a multiple of 4 and at least the discriminator receptive field (46)");
  }
  if (max_steps < 0) fail("max_steps", "must be >= 0");
  if (!std::isfinite(weights.cyc) || weights.cyc < 0) fail("lambda_cyc", "must be finite and >= 0");
  if (!std::isfinite(weights.adv) || weights.adv < 0) fail("lambda_adv", "must be finite and >= 0");
  if (!std::isfinite(weights.contour) || weights.contour < 0) fail("lambda_contour", "must be finite and >= 0");
  if (checkpoint_interval < 1) fail("checkpoint_interval", "must be >= 1");
  if (log_interval < 1) fail("log_interval", "must be >= 1");
  if (gen_channels < 1) fail("gen_channels", "must be >= 1");
  if (res_stages < 0) fail("res_stages", "must be >= 0");
  if (rdb_growth < 1) fail("rdb_growth", "must be >= 1");
  if (rdb_layers < 2) fail("rdb_layers", "must be >= 2");
  if (disc_channels < 1) fail("disc_channels", "must be >= 1");
}

nn::GeneratorConfig TrainConfig::generator_config() const {
  nn::GeneratorConfig g;
  g.base_channels = gen_channels;
  g.res_stages = res_stages;
  g.rdb_growth = rdb_growth;
  g.rdb_layers = rdb_layers;
  g.use_gate_activation = gate_activation;
  g.global_residual = global_residual;
  g.toggles = {toggles.ddscm, toggles.dfre, toggles.ffm};
  return g;
}

nn::DiscriminatorConfig TrainConfig::discriminator_config() const { return {disc_channels}; }

data::SampleOptions TrainConfig::sample_options() const {
  data::SampleOptions s;
  s.batch_size = batch_size;
  s.crop = crop;
  s.horizontal_flip = horizontal_flip;
  return s;
}

TrainConfig desk_preset() {
  TrainConfig c;
  c.crop = 64;
  c.max_steps = 2000;
  // a lower rate annealed to zero keeps the short adversarial run from drifting late
  c.lr = 5e-5;
  c.lr_decay_start = 0;
  c.contour_mode = loss::ContourMode::Matched;
  c.checkpoint_interval = 500;
  c.gen_channels = 16;
  c.res_stages = 3;
  c.rdb_growth = 16;
  c.rdb_layers = 3;
  c.disc_channels = 16;
  return c;
}

namespace {

struct Field {
  const char* key;
  std::function<nlohmann::json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const nlohmann::json&)> set;
};

template <typename T>
T read_as(const char* key, const nlohmann::json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key, std::string(key) + ": expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(key, std::string(key) + ": expected an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0) {
      throw ConfigError(key, std::string(key) + ": expected a nonnegative integer");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(key, std::string(key) + ": expected a number");
  } else {
    if (!v.is_string()) throw ConfigError(key, std::string(key) + ": expected a string");
  }
  return v.get<T>();
}

#define DCM_FIELD(name, member, type)                                           \
  Field {                                                                       \
    name, [](const TrainConfig& c) { return nlohmann::json(c.member); },        \
        [](TrainConfig& c, const nlohmann::json& v) { c.member = read_as<type>(name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      DCM_FIELD("lr", lr, double),
      DCM_FIELD("lr_decay_start", lr_decay_start, int64_t),
      DCM_FIELD("adam_beta1", adam_beta1, double),
      DCM_FIELD("adam_beta2", adam_beta2, double),
      DCM_FIELD("batch_size", batch_size, int64_t),
      DCM_FIELD("crop", crop, int64_t),
      DCM_FIELD("max_steps", max_steps, int64_t),
      DCM_FIELD("seed", seed, uint64_t),
      DCM_FIELD("lambda_cyc", weights.cyc, double),
      DCM_FIELD("lambda_adv", weights.adv, double),
      DCM_FIELD("lambda_contour", weights.contour, double),
      DCM_FIELD("ddscm", toggles.ddscm, bool),
      DCM_FIELD("dfre", toggles.dfre, bool),
      DCM_FIELD("ffm", toggles.ffm, bool),
      DCM_FIELD("bca", toggles.bca, bool),
      Field{"contour_mode",
            [](const TrainConfig& c) { return nlohmann::json(std::string(loss::to_string(c.contour_mode))); },
            [](TrainConfig& c, const nlohmann::json& v) {
              try {
                c.contour_mode = loss::parse_contour_mode(read_as<std::string>("contour_mode", v));
              } catch (const ParameterError& e) {
                throw ConfigError("contour_mode", std::string("contour_mode: ") + e.what());
              }
            }},
      DCM_FIELD("checkpoint_interval", checkpoint_interval, int64_t),
      DCM_FIELD("log_interval", log_interval, int64_t),
      DCM_FIELD("horizontal_flip", horizontal_flip, bool),
      DCM_FIELD("deterministic", deterministic, bool),
      DCM_FIELD("gen_channels", gen_channels, int64_t),
      DCM_FIELD("res_stages", res_stages, int64_t),
      DCM_FIELD("rdb_growth", rdb_growth, int64_t),
      DCM_FIELD("rdb_layers", rdb_layers, int64_t),
      DCM_FIELD("gate_activation", gate_activation, bool),
      DCM_FIELD("global_residual", global_residual, bool),
      DCM_FIELD("disc_channels", disc_channels, int64_t),
      DCM_FIELD("dataset", dataset, std::string),
      DCM_FIELD("out", out, std::string),
  };
  return kFields;
}

#undef DCM_FIELD

}  // namespace

nlohmann::json to_json(const TrainConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  j["schema_version"] = kConfigSchemaVersion;
  for (const auto& f : fields()) j[f.key] = f.get(config);
  return j;
}

TrainConfig config_from_json(const nlohmann::json& doc, const TrainConfig& base) {
  if (!doc.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  TrainConfig c = base;
  for (const auto& [key, value] : doc.items()) {
    if (key == "schema_version") {
      if (!value.is_number_integer() || value.get<int64_t>() != kConfigSchemaVersion) {
        throw ConfigError(key, "schema_version: unsupported value " + value.dump());
      }
      continue;
    }
    const auto& all = fields();
    auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return key == f.key; });
    if (it == all.end()) throw ConfigError(key, "unknown configuration key '" + key + "'");
    try {
      it->set(c, value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, key + ": value out of range");
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const fs::path& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open configuration '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("<syntax>", "configuration '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc, base);
}

}  // namespace dcm::train
