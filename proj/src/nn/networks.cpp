#include "sacc/nn/networks.hpp"

#include <cmath>
#include <random>

#include "sacc/data/degradation.hpp"
#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc {

namespace {

constexpr ops::Conv2dOptions kSame{1, 1};
constexpr ops::Conv2dOptions kHalve{2, 1};

Tensor& conv_weight(ParameterStore& store, const std::string& name, const std::string& group, std::size_t out,
                    std::size_t in, std::uint64_t seed, double scale = 1.0) {
  Tensor w(Shape{out, in, 3, 3});
  kaiming_uniform(w, in * 9, seed, scale);
  return store.add(name, group, w);
}

Tensor& zeros(ParameterStore& store, const std::string& name, const std::string& group, std::size_t n) {
  return store.add(name, group, Tensor(Shape{n}));
}

}  // namespace

void kaiming_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed, double scale) {
  if (fan_in == 0) throw ConfigError("Kaiming init needs a positive fan-in");
  std::mt19937_64 rng(seed);
  const double bound = scale * std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
}

// ------------------------------------------------------------------ configs

nlohmann::json PredictorConfig::to_json() const {
  return {{"input_side", input_side}, {"enc1", enc1},   {"enc2", enc2},
          {"post1", post1},           {"post2", post2}, {"levels", levels},
          {"channels", channels},     {"order", order}, {"fc_init_scale", fc_init_scale},
          {"init_bias", init_bias}};
}

PredictorConfig PredictorConfig::from_json(const nlohmann::json& j) {
  PredictorConfig c;
  c.input_side = j.value("input_side", c.input_side);
  c.enc1 = j.value("enc1", c.enc1);
  c.enc2 = j.value("enc2", c.enc2);
  c.post1 = j.value("post1", c.post1);
  c.post2 = j.value("post2", c.post2);
  c.levels = j.value("levels", c.levels);
  c.channels = j.value("channels", c.channels);
  c.order = j.value("order", c.order);
  c.fc_init_scale = j.value("fc_init_scale", c.fc_init_scale);
  c.init_bias = j.value("init_bias", c.init_bias);
  return c;
}

std::size_t BackboneConfig::feature_width() const {
  if (widths.empty()) throw ConfigError("backbone needs at least one block");
  if (pooling == "gap") return widths.back();
  std::size_t side = input_side;
  for (std::size_t i = 0; i < widths.size(); ++i) side /= 2;
  return widths.back() * side * side;
}

nlohmann::json BackboneConfig::to_json() const {
  return {{"widths", widths}, {"pooling", pooling}, {"input_side", input_side}, {"channels", channels}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.widths = j.value("widths", c.widths);
  c.pooling = j.value("pooling", c.pooling);
  c.input_side = j.value("input_side", c.input_side);
  c.channels = j.value("channels", c.channels);
  return c;
}

// ---------------------------------------------------------------- predictor

CurvePredictor::CurvePredictor(ParameterStore& store, PredictorConfig config, std::uint64_t seed,
                               const std::string& group)
    : config_(config), op_(build_integral_operator(config.levels, config.order)) {
  if (config_.input_side < 4 || config_.input_side % 4 != 0) {
    throw ConfigError("predictor input side must be a positive multiple of 4");
  }
  const std::string p = group + ".";
  const std::size_t c = config_.channels;
  enc1_w_ = conv_weight(store, p + "enc1.w", group, config_.enc1, c, derive_seed(seed, 1));
  enc1_b_ = zeros(store, p + "enc1.b", group, config_.enc1);
  enc2_w_ = conv_weight(store, p + "enc2.w", group, config_.enc2, config_.enc1, derive_seed(seed, 2));
  enc2_b_ = zeros(store, p + "enc2.b", group, config_.enc2);
  dec_w_ = conv_weight(store, p + "dec.w", group, config_.enc1, config_.enc2, derive_seed(seed, 3));
  dec_b_ = zeros(store, p + "dec.b", group, config_.enc1);
  post1_w_ = conv_weight(store, p + "post1.w", group, config_.post1, config_.enc1, derive_seed(seed, 4));
  post1_b_ = zeros(store, p + "post1.b", group, config_.post1);
  post2_w_ = conv_weight(store, p + "post2.w", group, config_.post2, config_.post1, derive_seed(seed, 5));
  post2_b_ = zeros(store, p + "post2.b", group, config_.post2);

  const std::size_t spatial = config_.input_side / 4;
  const std::size_t fc_in = config_.post2 * spatial * spatial;
  Tensor fc_w(Shape{config_.outputs(), fc_in});
  kaiming_uniform(fc_w, fc_in, derive_seed(seed, 6), config_.fc_init_scale);
  fc_w_ = store.add(p + "fc.w", group, fc_w);
  Tensor fc_b(Shape{config_.outputs()}, config_.init_bias);
  const std::size_t per_channel = config_.levels - 1;
  for (std::size_t ch = 0; ch < c; ++ch) fc_b.data()[ch * per_channel + per_channel - 1] = 1.0;
  fc_b_ = store.add(p + "fc.b", group, fc_b);
}

Tensor CurvePredictor::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.channels) {
    throw DimensionError("predictor expects N×" + std::to_string(config_.channels) + "×H×W, got " +
                         shape_to_string(images.shape()));
  }
  const std::size_t n = images.dim(0);
  Tensor x = ops::resize_average(images, config_.input_side, config_.input_side);
  Tensor e1 = ops::relu(ops::conv2d(x, enc1_w_, enc1_b_, kSame));
  Tensor e2 = ops::relu(ops::conv2d(ops::max_pool2d(e1, 2), enc2_w_, enc2_b_, kSame));
  Tensor d = ops::relu(ops::conv2d(ops::upsample_nearest2d(e2, 2), dec_w_, dec_b_, kSame));
  Tensor s = ops::add(d, e1);
  Tensor q1 = ops::relu(ops::conv2d(s, post1_w_, post1_b_, kHalve));
  Tensor q2 = ops::relu(ops::conv2d(q1, post2_w_, post2_b_, kHalve));
  Tensor flat = ops::reshape(q2, Shape{n, q2.numel() / n});
  Tensor out = ops::relu(ops::linear(flat, fc_w_, fc_b_));
  return ops::reshape(out, Shape{n, config_.channels, config_.levels - 1});
}

std::vector<SecondDerivativePrediction> CurvePredictor::predict_second_derivative(const ImageBatch& images) const {
  NoGradGuard guard;
  const Tensor out = forward(images.to_tensor());
  const std::size_t per = config_.levels - 1;
  std::vector<SecondDerivativePrediction> preds(images.count);
  auto d = out.data();
  for (std::size_t i = 0; i < images.count; ++i) {
    preds[i].channels.resize(config_.channels);
    for (std::size_t c = 0; c < config_.channels; ++c) {
      const auto base = d.begin() + static_cast<std::ptrdiff_t>((i * config_.channels + c) * per);
      preds[i].channels[c].assign(base, base + static_cast<std::ptrdiff_t>(per));
    }
  }
  return preds;
}

std::vector<ConcaveCurveSet> CurvePredictor::predict_curves(const ImageBatch& images) const {
  std::vector<ConcaveCurveSet> out;
  for (const auto& v : predict_second_derivative(images)) out.push_back(build_curve(v, op_));
  return out;
}

// ----------------------------------------------------------------- backbone

Backbone::Backbone(ParameterStore& store, BackboneConfig config, std::uint64_t seed, const std::string& group)
    : config_(std::move(config)) {
  if (config_.pooling != "flatten" && config_.pooling != "gap") {
    throw ConfigError("backbone pooling must be 'flatten' or 'gap', got '" + config_.pooling + "'");
  }
  if (config_.input_side >> config_.widths.size() == 0) throw ConfigError("backbone is too deep for its input size");
  std::size_t in = config_.channels;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const std::string p = group + ".block" + std::to_string(i);
    weights_.push_back(conv_weight(store, p + ".w", group, config_.widths[i], in, derive_seed(seed, 100 + i)));
    biases_.push_back(zeros(store, p + ".b", group, config_.widths[i]));
    in = config_.widths[i];
  }
}

Tensor Backbone::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.channels || images.dim(2) != config_.input_side ||
      images.dim(3) != config_.input_side) {
    throw DimensionError("backbone expects N×" + std::to_string(config_.channels) + "×" +
                         std::to_string(config_.input_side) + "×" + std::to_string(config_.input_side) + ", got " +
                         shape_to_string(images.shape()));
  }
  Tensor x = images;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = ops::max_pool2d(ops::relu(ops::conv2d(x, weights_[i], biases_[i], kSame)), 2);
  }
  const std::size_t n = x.dim(0);
  if (config_.pooling == "gap") {
    const std::size_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
    // Average over space as a fixed linear map: (N·C)×HW · HW×1.
    Tensor ones(Shape{hw, 1}, 1.0 / static_cast<double>(hw));
    return ops::reshape(ops::matmul(ops::reshape(x, Shape{n * c, hw}), ones), Shape{n, c});
  }
  return ops::reshape(x, Shape{n, x.numel() / n});
}

// --------------------------------------------------------------------- head

MlpHead::MlpHead(ParameterStore& store, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed,
                 const std::string& group)
    : in_(in), out_(out) {
  if (in == 0 || hidden == 0 || out == 0) throw ConfigError("MLP head widths must be positive");
  Tensor w1(Shape{hidden, in});
  kaiming_uniform(w1, in, derive_seed(seed, 1));
  Tensor w2(Shape{out, hidden});
  kaiming_uniform(w2, hidden, derive_seed(seed, 2));
  w1_ = store.add(group + ".fc1.w", group, w1);
  b1_ = store.add(group + ".fc1.b", group, Tensor(Shape{hidden}));
  w2_ = store.add(group + ".fc2.w", group, w2);
  b2_ = store.add(group + ".fc2.b", group, Tensor(Shape{out}));
}

Tensor MlpHead::forward(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != in_) {
    throw DimensionError("head expects N×" + std::to_string(in_) + " features, got " +
                         shape_to_string(features.shape()));
  }
  return ops::linear(ops::relu(ops::linear(features, w1_, b1_)), w2_, b2_);
}

Tensor extract_features(const Backbone& backbone, const Tensor& images) { return backbone.forward(images); }

Tensor classify(const MlpHead& head, const Tensor& features) { return head.forward(features); }

}  // namespace sacc
