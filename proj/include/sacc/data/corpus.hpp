#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacc/data/degradation.hpp"
#include "sacc/data/image.hpp"

namespace sacc {

struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::size_t side = 48;
  DegradationSpec degradation{};

  /// ConfigError unless counts are positive and side is a multiple of 3
  /// (jigsaw grid) no smaller than 48.
  void validate() const;
};

/// Procedurally drawn 10-class shape/texture images with darkened twins.
struct DeskCorpus {
  CorpusConfig config;
  ImageBatch normal_train, normal_test;
  ImageBatch dark_train, dark_test;
  std::vector<std::int64_t> train_labels, test_labels;

  static constexpr std::size_t kClasses = 10;
  static const std::vector<std::string>& class_names();

  nlohmann::json manifest() const;
};

/// Deterministic in `config`; rendering uses one rng stream per item.
DeskCorpus build_desk_corpus(const CorpusConfig& config);

/// Writes normal/ and dark/ PPM folders plus manifest.json under `dir`.
void write_desk_corpus(const std::filesystem::path& dir, const DeskCorpus& corpus);

/// Reads a corpus written by write_desk_corpus.
DeskCorpus load_desk_corpus(const std::filesystem::path& dir);

}  // namespace sacc
