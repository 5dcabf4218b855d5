#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacc/data/corpus.hpp"
#include "sacc/train/trainer.hpp"

namespace sacc {

inline constexpr int kSchemaVersion = 1;

/// Corpus geometry and degradation; the seeds come from RunConfig::seed.
struct CorpusSettings {
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::size_t side = 48;
  double gamma = 4.0;
  std::array<double, 3> bias{1.0, 1.0, 1.0};
  double noise_sigma = 0.01;

  /// Corpus seed = `seed`; degradation seed derived from it.
  CorpusConfig resolve(std::uint64_t seed) const;
};

/**
 * Fully resolved configuration of a CLI run. All randomness flows from the
 * single `seed`: corpus rendering, darkening noise and every training stream.
 *
 * JSON layout: {"schema_version", "seed", "corpus": {...}, "training": {...}}
 * where "training" is a TrainConfig without its seed.
 */
struct RunConfig {
  std::uint64_t seed = 0;
  CorpusSettings corpus{};
  TrainConfig training{};

  /// Training config with the run seed filled in.
  TrainConfig train_config() const;

  nlohmann::json to_json() const;
  /// Overlays `j` on the defaults. Unknown keys raise ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
};

/**
 * Applies `key=value` overrides to a config document. Keys are dotted paths
 * ("training.phase_l.steps") that must already exist in `doc`; values are
 * parsed as JSON when possible and taken as strings otherwise.
 */
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

/// Defaults <- optional JSON file <- overrides <- optional explicit seed.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed);

/**
 * Worker cap from SACC_THREADS (1 when unset). Must be a positive integer;
 * anything else raises ConfigError. The library runs its kernels on one
 * thread, so the value is validated and reported but never exceeded.
 */
std::size_t configured_threads();

}  // namespace sacc
