#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacc/curve/curve.hpp"
#include "sacc/data/corpus.hpp"
#include "sacc/data/image.hpp"
#include "sacc/nn/networks.hpp"
#include "sacc/pretext/jigsaw.hpp"
#include "sacc/tensor/parameter_store.hpp"

namespace sacc {

/// Optimizer budget of one training phase.
struct PhaseBudget {
  std::size_t steps = 0;
  std::size_t batch = 32;
  double lr = 0.01;
  std::string optimizer = "sgd";  // "sgd" (momentum) or "adam"
  double momentum = 0.9;

  nlohmann::json to_json() const;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t codebook_size = 100;
  std::vector<int> angles{0, 90, 180, 270};
  double tau = 0.9;
  std::size_t head_hidden = 256;
  PredictorConfig predictor{};
  BackboneConfig backbone{};
  PhaseBudget classifier{1500, 32, 0.01, "sgd", 0.9};
  PhaseBudget phase_n{2000, 32, 0.01, "sgd", 0.9};
  PhaseBudget phase_l{2000, 32, 0.001, "adam", 0.9};
  PhaseBudget finetune{1000, 32, 0.01, "sgd", 0.9};

  /// ConfigError unless τ ∈ (0,1], training steps > 0 (fine-tuning may be 0),
  /// batches > 0, learning rates > 0 and the angle set is lossless.
  void validate() const;

  nlohmann::json to_json() const;
  /// Overlays `j` on the defaults; unknown keys raise ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One training step record of the JSON-lines metrics log.
struct StepMetric {
  std::string phase;
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Collects step metrics and optionally streams them as JSON lines.
class MetricsLog {
 public:
  explicit MetricsLog(std::ostream* sink = nullptr) : sink_(sink) {}
  void record(const StepMetric& m);
  void note(const std::string& phase, const std::string& message);
  const std::vector<StepMetric>& steps() const { return steps_; }
  const std::vector<std::string>& notes() const { return notes_; }
  /// Loss series of one phase.
  std::vector<double> losses(const std::string& phase) const;

 private:
  std::ostream* sink_;
  std::vector<StepMetric> steps_;
  std::vector<std::string> notes_;
};

inline const std::string kBackboneGroup = "backbone";
inline const std::string kClassifierGroup = "classifier";
inline const std::string kPretextGroup = "pretext";
inline const std::string kPredictorGroup = "predictor";

/// Backbone + downstream classifier head + pretext head + curve predictor
/// sharing one parameter store (one group each).
class ModelSet {
 public:
  ModelSet(const TrainConfig& config, std::size_t classes = DeskCorpus::kClasses);
  ModelSet(const ModelSet&) = delete;
  ModelSet& operator=(const ModelSet&) = delete;

  ParameterStore store;
  Backbone backbone;
  MlpHead classifier;
  MlpHead pretext;
  CurvePredictor predictor;
  PermutationCodebook codebook;

  /// Makes exactly `group` trainable, after checking that every group in
  /// `must_be_frozen` is already frozen (ContractViolation otherwise).
  void train_only(const std::string& group, const std::vector<std::string>& must_be_frozen);
  /// Freezes every group.
  void freeze_all();

  std::map<std::string, std::uint64_t> checksums() const;
};

struct PhaseResult {
  std::string phase;
  std::size_t steps = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;   // mean over the last 10% of steps
  double final_accuracy = 0.0;
  std::map<std::string, std::uint64_t> checksums_before, checksums_after;

  nlohmann::json to_json() const;
};

/// Downstream model on normal light: trains backbone + classifier head jointly.
PhaseResult pretrain_classifier(ModelSet& models, const ImageBatch& images, const std::vector<std::int64_t>& labels,
                                const PhaseBudget& budget, std::uint64_t seed, MetricsLog& log);

/// Phase N: pretext head on rotated jigsaws of normal-light images. The
/// backbone must already be frozen.
PhaseResult train_phase_normal(ModelSet& models, const ImageBatch& normal, const TrainConfig& config, MetricsLog& log);

/// Phase L: curve predictor on enhanced-then-augmented low-light images
/// against the frozen backbone and pretext head.
PhaseResult train_phase_low(ModelSet& models, const ImageBatch& low, const TrainConfig& config, MetricsLog& log);

/// Mean pretext loss/accuracy of the current predictor over a fixed, seeded
/// sequence of puzzle batches (no parameter changes).
struct PretextEval {
  double loss = 0.0;
  double accuracy = 0.0;
};
PretextEval evaluate_pretext(const ModelSet& models, const ImageBatch& images, const TrainConfig& config,
                             bool enhance_first, std::size_t batches, std::size_t batch_size, std::uint64_t seed);

struct EnhancedBatch {
  ImageBatch images;
  std::vector<ConcaveCurveSet> curves;
};
EnhancedBatch enhance(const ModelSet& models, const ImageBatch& images);

struct PseudoLabel {
  std::string id;
  std::int64_t label = 0;
  double confidence = 0.0;
  std::size_t index = 0;  // position in the labelled batch
};
struct PseudoLabelSet {
  double tau = 0.0;
  std::vector<PseudoLabel> entries;
};
PseudoLabelSet generate_pseudo_labels(const ModelSet& models, const ImageBatch& images, double tau);

/// SACC+: fine-tunes the classifier head on 1:1 mixed batches of labelled
/// normal images and pseudo-labelled enhanced low-light images. Backbone and
/// predictor stay frozen. An empty pseudo set degrades to normal-only batches.
PhaseResult finetune_downstream(ModelSet& models, const ImageBatch& normal, const std::vector<std::int64_t>& labels,
                                const ImageBatch& enhanced_low, const PseudoLabelSet& pseudo,
                                const PhaseBudget& budget, std::uint64_t seed, MetricsLog& log);

/// Top-1 accuracy of backbone + classifier head.
double evaluate_classifier(const ModelSet& models, const ImageBatch& images, const std::vector<std::int64_t>& labels);

/// Per-channel mean absolute deviation between the image-averaged learned
/// curve and a reference, alongside the identity curve's deviation.
struct CurveShapeReport {
  std::vector<double> learned_deviation;
  std::vector<double> identity_deviation;
  bool learned_closer_everywhere() const;
  nlohmann::json to_json() const;
};
CurveShapeReport compare_curve_shape(const std::vector<ConcaveCurveSet>& curves, const ConcaveCurveSet& reference);

/// Stages of the full pipeline; each includes all earlier ones.
enum class PipelineStage { PhaseN, PhaseL, SaccPlus };

struct PipelineResult {
  nlohmann::json report;
};

/**
 * Classifier pretraining -> phase N -> phase L -> (optional) SACC+ fine-tuning
 * and evaluation on the darkened test split. Asserts the asymmetry contract
 * via checksums at every phase boundary and returns the final report.
 *
 * With `first_stage` = PhaseL the classifier and pretext head are taken from
 * `models` as restored from a phase-N checkpoint and only later stages run.
 * A report may stop at PhaseN or PhaseL; SaccPlus is not a valid first stage.
 * `on_stage_end` (optional) sees the models after each completed stage, e.g.
 * to checkpoint the SACC classifier before fine-tuning replaces it.
 */
using StageCallback = std::function<void(const ModelSet&, PipelineStage)>;
PipelineResult run_pipeline(ModelSet& models, const DeskCorpus& corpus, const TrainConfig& config, MetricsLog& log,
                            PipelineStage last_stage = PipelineStage::SaccPlus,
                            PipelineStage first_stage = PipelineStage::PhaseN, const StageCallback& on_stage_end = {});

}  // namespace sacc
