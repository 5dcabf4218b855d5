#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "sacc/app/run_config.hpp"
#include "sacc/data/image_io.hpp"
#include "sacc/train/trainer.hpp"

namespace sacc {

/**
 * Output directory that is filled in a sibling temp directory and renamed
 * into place by commit(). Destroying an uncommitted directory removes the
 * partial output, so failed runs leave nothing behind.
 */
class StagedOutput {
 public:
  /// ConfigError when `target` exists and `overwrite` is false.
  StagedOutput(std::filesystem::path target, bool overwrite);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  const std::filesystem::path& path() const { return staging_; }
  const std::filesystem::path& target() const { return target_; }
  void commit();

 private:
  std::filesystem::path target_, staging_;
  bool overwrite_;
  bool committed_ = false;
};

/// Writes pretty-printed JSON followed by a newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// A trained model directory: config.json, codebook.json and one or more
/// checkpoints (model.ckpt, plus sacc.ckpt holding the pre-fine-tuning state).
inline constexpr const char* kModelCheckpoint = "model.ckpt";
inline constexpr const char* kSaccCheckpoint = "sacc.ckpt";

void save_model(const std::filesystem::path& dir, const RunConfig& config, const ModelSet& models,
                const std::string& checkpoint = kModelCheckpoint);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<ModelSet> models;
};
/// Rebuilds the model set from config.json and restores `checkpoint`. The
/// stored codebook must equal the one the config regenerates.
LoadedModel load_model(const std::filesystem::path& dir, const std::string& checkpoint = kModelCheckpoint);

struct GenerateCorpusOptions {
  RunConfig config;
  std::filesystem::path out;
  bool overwrite = false;
};
nlohmann::json cmd_generate_corpus(const GenerateCorpusOptions& opts);

struct TrainOptions {
  RunConfig config;
  std::optional<std::filesystem::path> corpus;  // directory written by generate-corpus
  bool generate_corpus = false;                 // render the corpus from the config instead
  std::filesystem::path out;
  std::string phase = "all";                    // "all", "n" or "l"
  std::optional<std::filesystem::path> head;    // model directory of a phase-n run (required for "l")
  bool overwrite = false;
  std::function<void(PipelineStage)> on_stage_end;  // progress hook; never affects outputs
};
/// Writes report.json, metrics.jsonl, config.json, codebook.json and the
/// checkpoints into `out`; returns the report.
nlohmann::json cmd_train(const TrainOptions& opts);

struct EnhanceOptions {
  std::filesystem::path model;
  std::filesystem::path input;  // image file or directory (a frame directory with `video`)
  std::filesystem::path out;
  bool video = false;
  bool requantize = false;
  ImageFormat format = ImageFormat::Ppm;
  bool overwrite = false;
};
nlohmann::json cmd_enhance(const EnhanceOptions& opts);

struct EvalOptions {
  std::filesystem::path model;
  std::optional<std::filesystem::path> corpus;
  bool generate_corpus = false;
  std::optional<std::filesystem::path> out;  // report file
};
nlohmann::json cmd_eval(const EvalOptions& opts);

struct AnalyzeCrfOptions {
  std::optional<std::filesystem::path> input;  // DoRF-style or plain curve file
  bool synthetic = false;                      // the bundled synthetic concave set
  std::optional<std::filesystem::path> out;
};
nlohmann::json cmd_analyze_crf(const AnalyzeCrfOptions& opts);

struct ExportCurveOptions {
  std::filesystem::path model;
  std::filesystem::path image;
  std::filesystem::path out;  // CSV file
  std::string checkpoint = kModelCheckpoint;
};
nlohmann::json cmd_export_curve(const ExportCurveOptions& opts);

/// Process exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace sacc
