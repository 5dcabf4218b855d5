#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacc/curve/curve.hpp"
#include "sacc/curve/integral_operator.hpp"
#include "sacc/data/image.hpp"
#include "sacc/tensor/parameter_store.hpp"
#include "sacc/tensor/tensor.hpp"

namespace sacc {

struct PredictorConfig {
  std::size_t input_side = 16;  // images are area-averaged to this size first
  std::size_t enc1 = 16, enc2 = 32;
  std::size_t post1 = 32, post2 = 64;
  std::size_t levels = 256;
  std::size_t channels = 3;
  int order = 2;
  /// Scale applied to the Kaiming bound of the final fully connected layer.
  double fc_init_scale = 1e-4;
  /// Initial bias of every output except the last one per channel (which is 1),
  /// so an untrained predictor emits a near-identity curve.
  double init_bias = 1e-5;

  std::size_t outputs() const { return (levels - 1) * channels; }
  nlohmann::json to_json() const;
  static PredictorConfig from_json(const nlohmann::json& j);
};

struct BackboneConfig {
  std::vector<std::size_t> widths{16, 32, 64, 64};
  /// "flatten" keeps the spatial layout of the last feature map; "gap" averages it away.
  std::string pooling = "flatten";
  std::size_t input_side = 48;
  std::size_t channels = 3;

  std::size_t feature_width() const;
  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

/// He/Kaiming-uniform fill, bound = scale * sqrt(6 / fan_in).
void kaiming_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed, double scale = 1.0);

/**
 * Network C: shallow U-net over a 16×16 downsample (one skip connection), two
 * stride-2 convolutions and one fully connected layer to (P-1)·C outputs,
 * followed by ReLU so every predicted -∇²c entry is non-negative.
 */
class CurvePredictor {
 public:
  CurvePredictor(ParameterStore& store, PredictorConfig config, std::uint64_t seed,
                 const std::string& group = "predictor");

  /// N×C×H×W images in [0,1] (H,W >= 16) -> N×C×(P-1) non-negative tensor.
  Tensor forward(const Tensor& images) const;

  /// Second-derivative vectors for every image of the batch (no tape).
  std::vector<SecondDerivativePrediction> predict_second_derivative(const ImageBatch& images) const;

  /// Curves for every image (no tape).
  std::vector<ConcaveCurveSet> predict_curves(const ImageBatch& images) const;

  const PredictorConfig& config() const { return config_; }
  const IntegralOperator& integral_operator() const { return op_; }

 private:
  PredictorConfig config_;
  IntegralOperator op_;
  Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_, dec_w_, dec_b_;
  Tensor post1_w_, post1_b_, post2_w_, post2_b_, fc_w_, fc_b_;
};

/// Four conv3×3 + ReLU + 2×2 max-pool blocks.
class Backbone {
 public:
  Backbone(ParameterStore& store, BackboneConfig config, std::uint64_t seed, const std::string& group = "backbone");

  /// N×C×H×W -> N×F features.
  Tensor forward(const Tensor& images) const;
  std::size_t feature_width() const { return config_.feature_width(); }
  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  std::vector<Tensor> weights_, biases_;
};

/// Two-layer MLP F -> hidden -> outputs.
class MlpHead {
 public:
  MlpHead(ParameterStore& store, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed,
          const std::string& group);

  /// N×in -> N×out logits. DimensionError when the feature width differs.
  Tensor forward(const Tensor& features) const;
  std::size_t inputs() const { return in_; }
  std::size_t outputs() const { return out_; }

 private:
  std::size_t in_, out_;
  Tensor w1_, b1_, w2_, b2_;
};

/// Feature extraction and classification helpers used by the trainer and tests.
Tensor extract_features(const Backbone& backbone, const Tensor& images);
Tensor classify(const MlpHead& head, const Tensor& features);

}  // namespace sacc
