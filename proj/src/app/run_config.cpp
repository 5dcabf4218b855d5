#include "sacc/app/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "sacc/data/degradation.hpp"
#include "sacc/errors.hpp"

namespace sacc {

namespace {

constexpr std::uint64_t kDegradationStream = 0xDA4C;

// Every key of `overlay` must exist in `base`; objects are checked recursively.
void check_known_keys(const nlohmann::json& base, const nlohmann::json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object()) check_known_keys(base[key], value, path);
  }
}

void merge_into(nlohmann::json& base, const nlohmann::json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (base[key].is_object() && value.is_object()) {
      merge_into(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace

CorpusConfig CorpusSettings::resolve(std::uint64_t seed) const {
  CorpusConfig c;
  c.seed = seed;
  c.train_count = train_count;
  c.test_count = test_count;
  c.side = side;
  c.degradation.gamma = gamma;
  c.degradation.bias = bias;
  c.degradation.noise_sigma = noise_sigma;
  c.degradation.seed = derive_seed(seed, kDegradationStream);
  c.validate();
  c.degradation.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = training;
  t.seed = seed;
  return t;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json training_json = training.to_json();
  training_json.erase("seed");
  return {{"schema_version", kSchemaVersion},
          {"seed", seed},
          {"corpus",
           {{"train_count", corpus.train_count},
            {"test_count", corpus.test_count},
            {"side", corpus.side},
            {"gamma", corpus.gamma},
            {"bias", corpus.bias},
            {"noise_sigma", corpus.noise_sigma}}},
          {"training", training_json}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  nlohmann::json doc = RunConfig{}.to_json();
  check_known_keys(doc, j, "");
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + j["schema_version"].dump());
  }
  merge_into(doc, j);
  RunConfig c;
  try {
    c.seed = doc.at("seed").get<std::uint64_t>();
    const auto& cj = doc.at("corpus");
    c.corpus.train_count = cj.at("train_count").get<std::size_t>();
    c.corpus.test_count = cj.at("test_count").get<std::size_t>();
    c.corpus.side = cj.at("side").get<std::size_t>();
    c.corpus.gamma = cj.at("gamma").get<double>();
    c.corpus.bias = cj.at("bias").get<std::array<double, 3>>();
    c.corpus.noise_sigma = cj.at("noise_sigma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  nlohmann::json training = doc.at("training");
  training["seed"] = c.seed;
  c.training = TrainConfig::from_json(training);
  c.corpus.resolve(c.seed);  // validates
  return c;
}

nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq), text = item.substr(eq + 1);
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    *node = value;
  }
  return doc;
}

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
  nlohmann::json doc = RunConfig{}.to_json();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError(file->string() + ": cannot open config file");
    nlohmann::json user = nlohmann::json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError(file->string() + ": not valid JSON");
    check_known_keys(doc, user, "");
    merge_into(doc, user);
  }
  doc = apply_overrides(doc, overrides);
  if (seed) doc["seed"] = *seed;
  return RunConfig::from_json(doc);
}

std::size_t configured_threads() {
  const char* env = std::getenv("SACC_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::string text(env);
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || value == 0) {
    throw ConfigError("SACC_THREADS must be a positive integer, got '" + text + "'");
  }
  return value;
}

}  // namespace sacc
