#include "sacc/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <variant>

#include "sacc/data/degradation.hpp"
#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/optim.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc {

namespace {

constexpr std::size_t kEvalChunk = 64;

// Stream ids for derive_seed; fixed so that every phase draws from its own
// reproducible generator regardless of what ran before it.
enum Stream : std::uint64_t {
  kStreamBackbone = 1,
  kStreamClassifier,
  kStreamPretext,
  kStreamPredictor,
  kStreamCodebook,
  kStreamPretrain,
  kStreamPhaseN,
  kStreamPhaseL,
  kStreamFinetune,
  kStreamProbe,
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json checksums_json(const std::map<std::string, std::uint64_t>& sums) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [group, sum] : sums) j[group] = hex64(sum);
  return j;
}

class Optimizer {
 public:
  explicit Optimizer(const PhaseBudget& b) {
    if (b.optimizer == "sgd") {
      impl_ = Sgd(b.lr, b.momentum);
    } else if (b.optimizer == "adam") {
      impl_ = Adam(b.lr);
    } else {
      throw ConfigError("unknown optimizer '" + b.optimizer + "' (expected sgd or adam)");
    }
  }
  void step(ParameterStore& store) {
    std::visit([&](auto& opt) { opt.step(store); }, impl_);
  }

 private:
  std::variant<Sgd, Adam> impl_ = Sgd(0.0);
};

// Reshuffles indices every epoch and hands out consecutive batches.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw InputError("cannot sample batches from an empty set");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

double batch_accuracy(const Tensor& logits, std::span<const std::int64_t> labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto d = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = d.subspan(i * k, k);
    const auto best = static_cast<std::int64_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<std::int64_t> pick(const std::vector<std::int64_t>& labels, const std::vector<std::size_t>& idx) {
  std::vector<std::int64_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels.at(i));
  return out;
}

void require_budget(const PhaseBudget& b, const std::string& phase, bool allow_zero_steps = false) {
  if (!allow_zero_steps && b.steps == 0) throw ConfigError(phase + ": step count must be positive");
  if (b.batch == 0) throw ConfigError(phase + ": batch size must be positive");
  if (!(b.lr > 0.0)) throw ConfigError(phase + ": learning rate must be positive");
  if (b.optimizer != "sgd" && b.optimizer != "adam") throw ConfigError(phase + ": unknown optimizer " + b.optimizer);
  if (!(b.momentum >= 0.0 && b.momentum < 1.0)) throw ConfigError(phase + ": momentum must lie in [0,1)");
}

// Tracks the running loss summary of a phase.
struct PhaseTracker {
  PhaseResult result;
  std::vector<double> losses, accuracies;

  void add(MetricsLog& log, std::size_t step, double loss, double acc) {
    losses.push_back(loss);
    accuracies.push_back(acc);
    log.record({result.phase, step, loss, acc});
  }
  PhaseResult finish(const ModelSet& models) {
    result.steps = losses.size();
    if (!losses.empty()) {
      result.first_loss = losses.front();
      const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
      double l = 0.0, a = 0.0;
      for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) {
        l += losses[i];
        a += accuracies[i];
      }
      result.final_loss = l / static_cast<double>(tail);
      result.final_accuracy = a / static_cast<double>(tail);
    }
    result.checksums_after = models.checksums();
    return result;
  }
};

// Asserts that exactly the `changed` groups differ between two checksum maps.
void assert_only_changed(const std::map<std::string, std::uint64_t>& before,
                         const std::map<std::string, std::uint64_t>& after, const std::set<std::string>& allowed,
                         const std::string& phase) {
  for (const auto& [group, sum] : before) {
    if (!allowed.count(group) && after.at(group) != sum) {
      throw ContractViolation(phase + " modified the frozen '" + group + "' parameters");
    }
  }
}

Tensor features_of(const ModelSet& models, const ImageBatch& images) {
  NoGradGuard guard;
  std::vector<double> rows;
  const std::size_t f = models.backbone.feature_width();
  rows.reserve(images.count * f);
  for (std::size_t start = 0; start < images.count; start += kEvalChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.count, start + kEvalChunk); ++i) idx.push_back(i);
    const Tensor feats = extract_features(models.backbone, images.select(idx).to_tensor());
    rows.insert(rows.end(), feats.data().begin(), feats.data().end());
  }
  return Tensor(Shape{images.count, f}, std::move(rows));
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
  const std::size_t w = m.dim(1);
  std::vector<double> out;
  out.reserve(idx.size() * w);
  auto d = m.data();
  for (auto i : idx) out.insert(out.end(), d.begin() + static_cast<std::ptrdiff_t>(i * w),
                                d.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
  return Tensor(Shape{idx.size(), w}, std::move(out));
}

Tensor stack_rows(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor(Shape{a.dim(0) + b.dim(0), a.dim(1)}, std::move(out));
}

// Enhanced, augmented pretext logits for a batch; records on the active tape.
Tensor pretext_logits_low(const ModelSet& models, const ImageBatch& batch, const PuzzlePlan& plan) {
  Tensor v = models.predictor.forward(batch.to_tensor());
  Tensor g = build_curve_tensor(v, models.predictor.integral_operator());
  Tensor enhanced = apply_curve_tensor(g, batch);
  return classify(models.pretext, extract_features(models.backbone, puzzle_tensor(enhanced, plan, models.codebook)));
}

// ----------------------------------------------------------- config helpers

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

PhaseBudget budget_from_json(const nlohmann::json& j, PhaseBudget b, const std::string& where) {
  reject_unknown(j, {"steps", "batch", "lr", "optimizer", "momentum"}, where);
  b.steps = j.value("steps", b.steps);
  b.batch = j.value("batch", b.batch);
  b.lr = j.value("lr", b.lr);
  b.optimizer = j.value("optimizer", b.optimizer);
  b.momentum = j.value("momentum", b.momentum);
  return b;
}

}  // namespace

// ------------------------------------------------------------------ configs

nlohmann::json PhaseBudget::to_json() const {
  return {{"steps", steps}, {"batch", batch}, {"lr", lr}, {"optimizer", optimizer}, {"momentum", momentum}};
}

void TrainConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0,1]");
  if (codebook_size < 1 || codebook_size > kAllPermutations) throw ConfigError("codebook_size must lie in [1, 9!]");
  validate_angles(angles);
  if (head_hidden == 0) throw ConfigError("head_hidden must be positive");
  if (predictor.order < 0 || predictor.order > 3) throw ConfigError("constraint order must be 0, 1, 2 or 3");
  require_budget(classifier, "classifier");
  require_budget(phase_n, "phase_n");
  require_budget(phase_l, "phase_l");
  require_budget(finetune, "finetune", true);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"seed", seed},
          {"codebook_size", codebook_size},
          {"angles", angles},
          {"tau", tau},
          {"head_hidden", head_hidden},
          {"predictor", predictor.to_json()},
          {"backbone", backbone.to_json()},
          {"classifier", classifier.to_json()},
          {"phase_n", phase_n.to_json()},
          {"phase_l", phase_l.to_json()},
          {"finetune", finetune.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    reject_unknown(j,
                   {"seed", "codebook_size", "angles", "tau", "head_hidden", "predictor", "backbone", "classifier",
                    "phase_n", "phase_l", "finetune"},
                   "");
    c.seed = j.value("seed", c.seed);
    c.codebook_size = j.value("codebook_size", c.codebook_size);
    c.angles = j.value("angles", c.angles);
    c.tau = j.value("tau", c.tau);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    if (j.contains("predictor")) {
      reject_unknown(j["predictor"],
                     {"input_side", "enc1", "enc2", "post1", "post2", "levels", "channels", "order", "fc_init_scale",
                      "init_bias"},
                     "predictor");
      nlohmann::json merged = c.predictor.to_json();
      merged.update(j["predictor"]);
      c.predictor = PredictorConfig::from_json(merged);
    }
    if (j.contains("backbone")) {
      reject_unknown(j["backbone"], {"widths", "pooling", "input_side", "channels"}, "backbone");
      nlohmann::json merged = c.backbone.to_json();
      merged.update(j["backbone"]);
      c.backbone = BackboneConfig::from_json(merged);
    }
    if (j.contains("classifier")) c.classifier = budget_from_json(j["classifier"], c.classifier, "classifier");
    if (j.contains("phase_n")) c.phase_n = budget_from_json(j["phase_n"], c.phase_n, "phase_n");
    if (j.contains("phase_l")) c.phase_l = budget_from_json(j["phase_l"], c.phase_l, "phase_l");
    if (j.contains("finetune")) c.finetune = budget_from_json(j["finetune"], c.finetune, "finetune");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

// -------------------------------------------------------------------- log

void MetricsLog::record(const StepMetric& m) {
  steps_.push_back(m);
  if (sink_) {
    *sink_ << nlohmann::json{{"phase", m.phase}, {"step", m.step}, {"loss", m.loss}, {"accuracy", m.accuracy}}.dump()
           << "\n";
  }
}

void MetricsLog::note(const std::string& phase, const std::string& message) {
  notes_.push_back(phase + ": " + message);
  if (sink_) *sink_ << nlohmann::json{{"phase", phase}, {"note", message}}.dump() << "\n";
}

std::vector<double> MetricsLog::losses(const std::string& phase) const {
  std::vector<double> out;
  for (const auto& s : steps_) {
    if (s.phase == phase) out.push_back(s.loss);
  }
  return out;
}

// --------------------------------------------------------------- model set

ModelSet::ModelSet(const TrainConfig& config, std::size_t classes)
    : backbone(store, config.backbone, derive_seed(config.seed, kStreamBackbone), kBackboneGroup),
      classifier(store, backbone.feature_width(), config.head_hidden, classes,
                 derive_seed(config.seed, kStreamClassifier), kClassifierGroup),
      pretext(store, backbone.feature_width(), config.head_hidden, config.codebook_size,
              derive_seed(config.seed, kStreamPretext), kPretextGroup),
      predictor(store, config.predictor, derive_seed(config.seed, kStreamPredictor), kPredictorGroup),
      codebook(build_codebook(config.codebook_size, derive_seed(config.seed, kStreamCodebook))) {
  freeze_all();
}

void ModelSet::freeze_all() {
  for (const auto& g : store.groups()) store.freeze(g);
}

void ModelSet::train_only(const std::string& group, const std::vector<std::string>& must_be_frozen) {
  for (const auto& g : must_be_frozen) {
    if (!store.is_frozen(g)) throw ContractViolation("the '" + g + "' parameters must be frozen before this phase");
  }
  freeze_all();
  store.unfreeze(group);
}

std::map<std::string, std::uint64_t> ModelSet::checksums() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& g : store.groups()) out[g] = store.checksum(g);
  return out;
}

nlohmann::json PhaseResult::to_json() const {
  return {{"phase", phase},
          {"steps", steps},
          {"first_loss", first_loss},
          {"final_loss", final_loss},
          {"final_accuracy", final_accuracy},
          {"checksums_before", checksums_json(checksums_before)},
          {"checksums_after", checksums_json(checksums_after)}};
}

// ------------------------------------------------------------------ phases

PhaseResult pretrain_classifier(ModelSet& models, const ImageBatch& images, const std::vector<std::int64_t>& labels,
                                const PhaseBudget& budget, std::uint64_t seed, MetricsLog& log) {
  require_budget(budget, "classifier");
  if (labels.size() != images.count) throw DimensionError("one label per image required");
  PhaseTracker t;
  t.result.phase = "classifier";
  t.result.checksums_before = models.checksums();
  models.freeze_all();
  models.store.unfreeze(kBackboneGroup);
  models.store.unfreeze(kClassifierGroup);
  Optimizer opt(budget);
  EpochSampler sampler(images.count, derive_seed(seed, kStreamPretrain));
  for (std::size_t step = 0; step < budget.steps; ++step) {
    const auto idx = sampler.next(budget.batch);
    const auto y = pick(labels, idx);
    models.store.zero_grad();
    GradientTape tape;
    const Tensor logits = classify(models.classifier, extract_features(models.backbone, images.select(idx).to_tensor()));
    const Tensor loss = ops::softmax_cross_entropy(logits, y);
    t.add(log, step, loss.item(), batch_accuracy(logits, y));
    tape.backward(loss);
    opt.step(models.store);
  }
  models.freeze_all();
  auto r = t.finish(models);
  assert_only_changed(r.checksums_before, r.checksums_after, {kBackboneGroup, kClassifierGroup}, "classifier");
  return r;
}

PhaseResult train_phase_normal(ModelSet& models, const ImageBatch& normal, const TrainConfig& config, MetricsLog& log) {
  require_budget(config.phase_n, "phase_n");
  models.train_only(kPretextGroup, {kBackboneGroup});
  PhaseTracker t;
  t.result.phase = "phaseN";
  t.result.checksums_before = models.checksums();
  Optimizer opt(config.phase_n);
  EpochSampler sampler(normal.count, derive_seed(config.seed, kStreamPhaseN));
  std::mt19937_64 rng(derive_seed(config.seed, kStreamPhaseN + 100));
  for (std::size_t step = 0; step < config.phase_n.steps; ++step) {
    const ImageBatch batch = normal.select(sampler.next(config.phase_n.batch));
    const PuzzlePlan plan = sample_plan(batch.count, models.codebook, config.angles, rng);
    Tensor feats;
    {
      NoGradGuard guard;  // the backbone is frozen: no activations need keeping
      feats = extract_features(models.backbone, puzzle_tensor(batch.to_tensor(), plan, models.codebook));
    }
    models.store.zero_grad();
    GradientTape tape;
    const Tensor logits = classify(models.pretext, feats);
    const Tensor loss = ops::softmax_cross_entropy(logits, plan.labels);
    t.add(log, step, loss.item(), batch_accuracy(logits, plan.labels));
    tape.backward(loss);
    opt.step(models.store);
  }
  models.freeze_all();
  auto r = t.finish(models);
  assert_only_changed(r.checksums_before, r.checksums_after, {kPretextGroup}, "phase N");
  return r;
}

PhaseResult train_phase_low(ModelSet& models, const ImageBatch& low, const TrainConfig& config, MetricsLog& log) {
  require_budget(config.phase_l, "phase_l");
  models.train_only(kPredictorGroup, {kBackboneGroup, kPretextGroup});
  PhaseTracker t;
  t.result.phase = "phaseL";
  t.result.checksums_before = models.checksums();
  Optimizer opt(config.phase_l);
  EpochSampler sampler(low.count, derive_seed(config.seed, kStreamPhaseL));
  std::mt19937_64 rng(derive_seed(config.seed, kStreamPhaseL + 100));
  for (std::size_t step = 0; step < config.phase_l.steps; ++step) {
    const ImageBatch batch = low.select(sampler.next(config.phase_l.batch));
    const PuzzlePlan plan = sample_plan(batch.count, models.codebook, config.angles, rng);
    models.store.zero_grad();
    GradientTape tape;
    const Tensor logits = pretext_logits_low(models, batch, plan);
    const Tensor loss = ops::softmax_cross_entropy(logits, plan.labels);
    t.add(log, step, loss.item(), batch_accuracy(logits, plan.labels));
    tape.backward(loss);
    opt.step(models.store);
  }
  models.freeze_all();
  auto r = t.finish(models);
  assert_only_changed(r.checksums_before, r.checksums_after, {kPredictorGroup}, "phase L");
  return r;
}

PretextEval evaluate_pretext(const ModelSet& models, const ImageBatch& images, const TrainConfig& config,
                             bool enhance_first, std::size_t batches, std::size_t batch_size, std::uint64_t seed) {
  NoGradGuard guard;
  EpochSampler sampler(images.count, derive_seed(seed, kStreamProbe));
  std::mt19937_64 rng(derive_seed(seed, kStreamProbe + 100));
  PretextEval out;
  for (std::size_t b = 0; b < batches; ++b) {
    const ImageBatch batch = images.select(sampler.next(batch_size));
    const PuzzlePlan plan = sample_plan(batch.count, models.codebook, config.angles, rng);
    const Tensor logits =
        enhance_first ? pretext_logits_low(models, batch, plan)
                      : classify(models.pretext, extract_features(models.backbone,
                                                                  puzzle_tensor(batch.to_tensor(), plan, models.codebook)));
    out.loss += ops::softmax_cross_entropy(logits, plan.labels).item();
    out.accuracy += batch_accuracy(logits, plan.labels);
  }
  out.loss /= static_cast<double>(batches);
  out.accuracy /= static_cast<double>(batches);
  return out;
}

EnhancedBatch enhance(const ModelSet& models, const ImageBatch& images) {
  EnhancedBatch out;
  std::vector<ImageBatch> parts;
  for (std::size_t start = 0; start < images.count; start += kEvalChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.count, start + kEvalChunk); ++i) idx.push_back(i);
    const ImageBatch chunk = images.select(idx);
    auto curves = models.predictor.predict_curves(chunk);
    parts.push_back(apply_curves(chunk, curves));
    out.curves.insert(out.curves.end(), std::make_move_iterator(curves.begin()), std::make_move_iterator(curves.end()));
  }
  out.images = ImageBatch::concat(parts);
  return out;
}

PseudoLabelSet generate_pseudo_labels(const ModelSet& models, const ImageBatch& images, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
  PseudoLabelSet set;
  set.tau = tau;
  NoGradGuard guard;
  const Tensor feats = features_of(models, images);
  const Tensor logits = classify(models.classifier, feats);
  const auto probs = ops::softmax_rows(logits);
  const std::size_t k = logits.dim(1);
  for (std::size_t i = 0; i < images.count; ++i) {
    const auto begin = probs.begin() + static_cast<std::ptrdiff_t>(i * k);
    const auto best = std::max_element(begin, begin + static_cast<std::ptrdiff_t>(k));
    if (*best >= tau) {
      set.entries.push_back({images.ids.size() == images.count ? images.ids[i] : std::to_string(i),
                             static_cast<std::int64_t>(best - begin), *best, i});
    }
  }
  return set;
}

PhaseResult finetune_downstream(ModelSet& models, const ImageBatch& normal, const std::vector<std::int64_t>& labels,
                                const ImageBatch& enhanced_low, const PseudoLabelSet& pseudo,
                                const PhaseBudget& budget, std::uint64_t seed, MetricsLog& log) {
  require_budget(budget, "finetune", true);
  if (labels.size() != normal.count) throw DimensionError("one label per normal image required");
  models.train_only(kClassifierGroup, {kBackboneGroup, kPredictorGroup});
  PhaseTracker t;
  t.result.phase = "finetune";
  t.result.checksums_before = models.checksums();
  if (pseudo.entries.empty()) log.note("finetune", "no pseudo labels passed the threshold; using normal data only");

  // Both the backbone and the predictor are frozen, so features are fixed.
  const Tensor normal_feats = features_of(models, normal);
  std::vector<std::size_t> pseudo_rows;
  std::vector<std::int64_t> pseudo_labels;
  for (const auto& e : pseudo.entries) {
    pseudo_rows.push_back(e.index);
    pseudo_labels.push_back(e.label);
  }
  const Tensor pseudo_feats =
      pseudo_rows.empty() ? Tensor() : gather_rows(features_of(models, enhanced_low), pseudo_rows);

  Optimizer opt(budget);
  EpochSampler normal_sampler(normal.count, derive_seed(seed, kStreamFinetune));
  std::optional<EpochSampler> pseudo_sampler;
  if (!pseudo_rows.empty()) pseudo_sampler.emplace(pseudo_rows.size(), derive_seed(seed, kStreamFinetune + 100));
  for (std::size_t step = 0; step < budget.steps; ++step) {
    const std::size_t half = pseudo_sampler ? budget.batch / 2 : budget.batch;
    const auto ni = normal_sampler.next(std::max<std::size_t>(1, half));
    Tensor feats = gather_rows(normal_feats, ni);
    auto y = pick(labels, ni);
    if (pseudo_sampler) {
      const auto pi = pseudo_sampler->next(std::max<std::size_t>(1, budget.batch - half));
      feats = stack_rows(feats, gather_rows(pseudo_feats, pi));
      const auto py = pick(pseudo_labels, pi);
      y.insert(y.end(), py.begin(), py.end());
    }
    models.store.zero_grad();
    GradientTape tape;
    const Tensor logits = classify(models.classifier, feats);
    const Tensor loss = ops::softmax_cross_entropy(logits, y);
    t.add(log, step, loss.item(), batch_accuracy(logits, y));
    tape.backward(loss);
    opt.step(models.store);
  }
  models.freeze_all();
  auto r = t.finish(models);
  assert_only_changed(r.checksums_before, r.checksums_after, {kClassifierGroup}, "fine-tuning");
  return r;
}

double evaluate_classifier(const ModelSet& models, const ImageBatch& images, const std::vector<std::int64_t>& labels) {
  if (labels.size() != images.count) throw DimensionError("one label per image required");
  NoGradGuard guard;
  const Tensor logits = classify(models.classifier, features_of(models, images));
  return batch_accuracy(logits, labels);
}

// ------------------------------------------------------------ curve shape

bool CurveShapeReport::learned_closer_everywhere() const {
  for (std::size_t c = 0; c < learned_deviation.size(); ++c) {
    if (!(learned_deviation[c] < identity_deviation[c])) return false;
  }
  return !learned_deviation.empty();
}

nlohmann::json CurveShapeReport::to_json() const {
  return {{"learned_mad", learned_deviation},
          {"identity_mad", identity_deviation},
          {"learned_closer_on_every_channel", learned_closer_everywhere()}};
}

CurveShapeReport compare_curve_shape(const std::vector<ConcaveCurveSet>& curves, const ConcaveCurveSet& reference) {
  if (curves.empty()) throw InputError("no curves to compare");
  const std::size_t levels = reference.levels, channels = reference.channels();
  CurveShapeReport out;
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> mean(levels, 0.0);
    for (const auto& set : curves) {
      if (set.levels != levels || set.channels() != channels) throw DimensionError("curve sets differ in shape");
      for (std::size_t p = 0; p < levels; ++p) mean[p] += set.lut[c][p] / static_cast<double>(curves.size());
    }
    double learned = 0.0, identity = 0.0;
    for (std::size_t p = 0; p < levels; ++p) {
      learned += std::abs(mean[p] - reference.lut[c][p]);
      identity += std::abs(static_cast<double>(p) / static_cast<double>(levels - 1) - reference.lut[c][p]);
    }
    out.learned_deviation.push_back(learned / static_cast<double>(levels));
    out.identity_deviation.push_back(identity / static_cast<double>(levels));
  }
  return out;
}

// ---------------------------------------------------------------- pipeline

PipelineResult run_pipeline(ModelSet& models, const DeskCorpus& corpus, const TrainConfig& config, MetricsLog& log,
                            PipelineStage last_stage, PipelineStage first_stage, const StageCallback& on_stage_end) {
  auto stage_done = [&](PipelineStage stage) {
    if (on_stage_end) on_stage_end(models, stage);
  };
  config.validate();
  if (first_stage == PipelineStage::SaccPlus) throw ConfigError("the pipeline cannot start at SACC+ fine-tuning");
  if (static_cast<int>(last_stage) < static_cast<int>(first_stage)) {
    throw ConfigError("the last pipeline stage precedes the first");
  }
  nlohmann::json report;
  report["schema_version"] = 1;
  report["config"] = config.to_json();
  report["corpus"] = {{"seed", corpus.config.seed},
                      {"train_count", corpus.normal_train.count},
                      {"test_count", corpus.normal_test.count},
                      {"side", corpus.config.side},
                      {"degradation", corpus.config.degradation.to_json()}};
  report["checksums_initial"] = checksums_json(models.checksums());

  const std::size_t probe_batches = 8, probe_batch = 32;
  const std::uint64_t probe_seed = derive_seed(config.seed, kStreamProbe);

  if (first_stage == PipelineStage::PhaseN) {
    auto cls = pretrain_classifier(models, corpus.normal_train, corpus.train_labels, config.classifier,
                                   derive_seed(config.seed, kStreamPretrain), log);
    report["classifier"] = cls.to_json();
    report["classifier"]["loss_series"] = log.losses("classifier");
  } else {
    report["classifier"] = {{"restored", true}};
  }
  const double normal_acc = evaluate_classifier(models, corpus.normal_test, corpus.test_labels);
  const double dark_acc = evaluate_classifier(models, corpus.dark_test, corpus.test_labels);
  report["classifier"]["normal_test_accuracy"] = normal_acc;
  report["classifier"]["dark_test_accuracy"] = dark_acc;

  // From here on the backbone is the frozen downstream feature extractor.
  models.freeze_all();
  if (first_stage == PipelineStage::PhaseN) {
    const PretextEval untrained_head =
        evaluate_pretext(models, corpus.normal_test, config, false, probe_batches, probe_batch, probe_seed);
    auto pn = train_phase_normal(models, corpus.normal_train, config, log);
    report["phaseN"] = pn.to_json();
    report["phaseN"]["loss_series"] = log.losses("phaseN");
    report["phaseN"]["untrained_test_accuracy"] = untrained_head.accuracy;
    report["phaseN"]["untrained_test_loss"] = untrained_head.loss;
  } else {
    report["phaseN"] = {{"restored", true}};
  }
  const PretextEval trained_head =
      evaluate_pretext(models, corpus.normal_test, config, false, probe_batches, probe_batch, probe_seed);
  report["phaseN"]["test_accuracy"] = trained_head.accuracy;
  report["phaseN"]["test_loss"] = trained_head.loss;
  report["phaseN"]["chance"] = 1.0 / static_cast<double>(config.codebook_size);
  report["phaseN"]["probe_samples"] = probe_batches * probe_batch;
  if (first_stage == PipelineStage::PhaseN) stage_done(PipelineStage::PhaseN);
  if (last_stage == PipelineStage::PhaseN) {
    report["checksums_final"] = checksums_json(models.checksums());
    return {report};
  }

  const PretextEval dark_probe_before =
      evaluate_pretext(models, corpus.dark_train, config, true, probe_batches, probe_batch, probe_seed);
  auto pl = train_phase_low(models, corpus.dark_train, config, log);
  const PretextEval dark_probe_after =
      evaluate_pretext(models, corpus.dark_train, config, true, probe_batches, probe_batch, probe_seed);
  report["phaseL"] = pl.to_json();
  report["phaseL"]["loss_series"] = log.losses("phaseL");
  report["phaseL"]["fixed_batch_loss_before"] = dark_probe_before.loss;
  report["phaseL"]["fixed_batch_loss_after"] = dark_probe_after.loss;

  const EnhancedBatch enhanced_test = enhance(models, corpus.dark_test);
  const EnhancedBatch enhanced_normal = enhance(models, corpus.normal_test);
  const double sacc_acc = evaluate_classifier(models, enhanced_test.images, corpus.test_labels);
  std::size_t valid_curves = 0;
  for (const auto& c : enhanced_test.curves) {
    valid_curves += curve_concavity_report(c).valid(1e-12, config.predictor.order >= 2);
  }
  nlohmann::json evaluation = {
      {"normal_test_accuracy", normal_acc},
      {"baseline_dark_accuracy", dark_acc},
      {"sacc_accuracy", sacc_acc},
      {"accuracy_drop", normal_acc - dark_acc},
      {"recovered_fraction", normal_acc > dark_acc ? (sacc_acc - dark_acc) / (normal_acc - dark_acc) : 0.0},
      {"dark_mean_brightness", corpus.dark_test.mean()},
      {"enhanced_dark_mean_brightness", enhanced_test.images.mean()},
      {"normal_mean_brightness", corpus.normal_test.mean()},
      {"enhanced_normal_mean_brightness", enhanced_normal.images.mean()},
      {"valid_curves", valid_curves},
      {"curve_count", enhanced_test.curves.size()},
      {"curve_shape_vs_analytic_inverse",
       compare_curve_shape(enhanced_test.curves, analytic_inverse_curve(corpus.config.degradation, config.predictor.levels))
           .to_json()}};

  stage_done(PipelineStage::PhaseL);
  if (last_stage == PipelineStage::SaccPlus) {
    const EnhancedBatch enhanced_train = enhance(models, corpus.dark_train);
    const PseudoLabelSet pseudo = generate_pseudo_labels(models, enhanced_train.images, config.tau);
    std::size_t pseudo_correct = 0;
    for (const auto& e : pseudo.entries) pseudo_correct += e.label == corpus.train_labels[e.index];
    auto ft = finetune_downstream(models, corpus.normal_train, corpus.train_labels, enhanced_train.images, pseudo,
                                  config.finetune, derive_seed(config.seed, kStreamFinetune), log);
    const double plus_acc = evaluate_classifier(models, enhanced_test.images, corpus.test_labels);
    report["finetune"] = ft.to_json();
    report["finetune"]["loss_series"] = log.losses("finetune");
    report["finetune"]["pseudo_labels"] = pseudo.entries.size();
    report["finetune"]["pseudo_label_precision"] =
        pseudo.entries.empty() ? 0.0 : static_cast<double>(pseudo_correct) / static_cast<double>(pseudo.entries.size());
    evaluation["sacc_plus_accuracy"] = plus_acc;
    evaluation["sacc_plus_normal_accuracy"] = evaluate_classifier(models, corpus.normal_test, corpus.test_labels);
    stage_done(PipelineStage::SaccPlus);
  }
  report["evaluation"] = evaluation;
  report["notes"] = log.notes();
  report["checksums_final"] = checksums_json(models.checksums());
  return {report};
}

}  // namespace sacc
