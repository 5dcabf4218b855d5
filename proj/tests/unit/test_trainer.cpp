#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "sacc/curve/curve.hpp"
#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/tape.hpp"
#include "sacc/train/trainer.hpp"

namespace sacc {
namespace {

// Small enough that a whole pipeline runs in a few seconds.
TrainConfig tiny_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.seed = seed;
  c.codebook_size = 6;
  c.head_hidden = 16;
  c.backbone.widths = {4, 6, 6, 8};
  c.classifier = {20, 8, 0.01, "sgd", 0.9};
  c.phase_n = {30, 8, 0.01, "sgd", 0.9};
  c.phase_l = {30, 8, 0.001, "adam", 0.9};
  c.finetune = {10, 8, 0.01, "sgd", 0.9};
  return c;
}

const DeskCorpus& tiny_corpus() {
  static const DeskCorpus corpus = [] {
    CorpusConfig cc;
    cc.seed = 5;
    cc.train_count = 40;
    cc.test_count = 20;
    cc.degradation.seed = 6;
    return build_desk_corpus(cc);
  }();
  return corpus;
}

// -log softmax(logits)[label], averaged, without the tensor engine.
double cross_entropy_oracle(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) m = std::max(m, logits.data()[i * k + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.data()[i * k + j] - m);
    total += m + std::log(z) - logits.data()[i * k + static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(n);
}

TEST(TrainConfig, JsonRoundTripAndOverlay) {
  const TrainConfig c = tiny_config();
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  const TrainConfig over = TrainConfig::from_json({{"tau", 0.5}, {"phase_l", {{"steps", 7}}}});
  EXPECT_EQ(over.tau, 0.5);
  EXPECT_EQ(over.phase_l.steps, 7u);
  EXPECT_EQ(over.phase_l.batch, TrainConfig{}.phase_l.batch);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(TrainConfig::from_json({{"taux", 0.5}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"phase_n", {{"step", 3}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"backbone", {{"depth", 3}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"tau", 0.0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"tau", 1.5}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"phase_n", {{"steps", 0}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"phase_l", {{"optimizer", "rmsprop"}}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"angles", {0, 45}}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"seed", "one"}}), ConfigError);
  EXPECT_NO_THROW(TrainConfig::from_json({{"finetune", {{"steps", 0}}}}));
  EXPECT_NO_THROW(TrainConfig::from_json({{"tau", 1.0}}));
}

TEST(ModelSet, StartsFrozenWithOneGroupPerModel) {
  ModelSet m(tiny_config());
  const auto sums = m.checksums();
  EXPECT_EQ(sums.size(), 4u);
  for (const auto& g : {kBackboneGroup, kClassifierGroup, kPretextGroup, kPredictorGroup}) {
    EXPECT_TRUE(m.store.is_frozen(g)) << g;
  }
  EXPECT_EQ(m.codebook.size(), 6u);
  m.store.unfreeze(kBackboneGroup);
  EXPECT_THROW(m.train_only(kPretextGroup, {kBackboneGroup}), ContractViolation);
}

TEST(PhaseNormal, OnlyThePretextHeadChanges) {
  const auto& corpus = tiny_corpus();
  ModelSet m(tiny_config());
  MetricsLog log;
  const auto r = train_phase_normal(m, corpus.normal_train, tiny_config(), log);
  EXPECT_EQ(r.steps, 30u);
  for (const auto& [group, sum] : r.checksums_before) {
    if (group == kPretextGroup) {
      EXPECT_NE(r.checksums_after.at(group), sum);
    } else {
      EXPECT_EQ(r.checksums_after.at(group), sum) << group;
    }
  }
  EXPECT_EQ(log.losses("phaseN").size(), 30u);
  EXPECT_TRUE(m.store.is_frozen(kPretextGroup));
}

TEST(PhaseNormal, UnfrozenBackboneIsAContractViolation) {
  ModelSet m(tiny_config());
  MetricsLog log;
  m.store.unfreeze(kBackboneGroup);
  EXPECT_THROW(train_phase_normal(m, tiny_corpus().normal_train, tiny_config(), log), ContractViolation);
}

TEST(PhaseLow, UnfrozenHeadIsAContractViolation) {
  ModelSet m(tiny_config());
  MetricsLog log;
  m.store.unfreeze(kPretextGroup);
  EXPECT_THROW(train_phase_low(m, tiny_corpus().dark_train, tiny_config(), log), ContractViolation);
}

TEST(PhaseNormal, IdenticalSeedsGiveIdenticalHeads) {
  MetricsLog l1, l2;
  ModelSet a(tiny_config()), b(tiny_config());
  train_phase_normal(a, tiny_corpus().normal_train, tiny_config(), l1);
  train_phase_normal(b, tiny_corpus().normal_train, tiny_config(), l2);
  EXPECT_EQ(a.checksums(), b.checksums());
  EXPECT_EQ(l1.losses("phaseN"), l2.losses("phaseN"));
  ModelSet c(tiny_config(4));
  MetricsLog l3;
  train_phase_normal(c, tiny_corpus().normal_train, tiny_config(4), l3);
  EXPECT_NE(c.checksums().at(kPretextGroup), a.checksums().at(kPretextGroup));
}

TEST(PhaseLow, OnlyThePredictorChangesAndFixedBatchLossFalls) {
  const auto& corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.phase_n.steps = 60;
  cfg.phase_l.steps = 60;
  ModelSet m(cfg);
  MetricsLog log;
  train_phase_normal(m, corpus.normal_train, cfg, log);
  const auto before = evaluate_pretext(m, corpus.dark_train, cfg, true, 4, 8, 11);
  const auto r = train_phase_low(m, corpus.dark_train, cfg, log);
  const auto after = evaluate_pretext(m, corpus.dark_train, cfg, true, 4, 8, 11);
  EXPECT_LT(after.loss, before.loss);
  for (const auto& [group, sum] : r.checksums_before) {
    if (group == kPredictorGroup) {
      EXPECT_NE(r.checksums_after.at(group), sum);
    } else {
      EXPECT_EQ(r.checksums_after.at(group), sum) << group;
    }
  }
  // Concave curves with g(0)=0 and g(1)=1 can only brighten.
  const auto enhanced = enhance(m, corpus.dark_test);
  EXPECT_GT(enhanced.images.mean(), corpus.dark_test.mean());
  for (const auto& set : enhanced.curves) EXPECT_TRUE(curve_concavity_report(set).valid(1e-12, true));
  for (double v : enhanced.images.values) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Pretext, LossMatchesIndependentImageRouteOracle) {
  const auto& corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.predictor.fc_init_scale = 0.3;  // a visibly non-identity curve
  ModelSet m(cfg);
  const ImageBatch batch = corpus.dark_train.select({0, 1, 2, 3, 4});
  const PuzzlePlan plan{{0, 1, 2, 3, 4}, {0, 5, 2, 3, 1}, {0, 90, 180, 270, 90}};

  // Tensor route, exactly as trained.
  NoGradGuard guard;
  Tensor v = m.predictor.forward(batch.to_tensor());
  Tensor enhanced = apply_curve_tensor(build_curve_tensor(v, m.predictor.integral_operator()), batch);
  Tensor logits = classify(m.pretext, extract_features(m.backbone, puzzle_tensor(enhanced, plan, m.codebook)));
  const double loss = ops::softmax_cross_entropy(logits, plan.labels).item();

  // Image route: curves, lookup, per-image puzzle, manual cross-entropy.
  const auto curves = m.predictor.predict_curves(batch);
  const ImageBatch looked_up = apply_curves(batch, curves);
  std::vector<ImageBatch> puzzles;
  for (std::size_t i = 0; i < batch.count; ++i) {
    puzzles.push_back(make_puzzle(looked_up.image(i), m.codebook, static_cast<std::size_t>(plan.labels[i]),
                                  plan.angles[i])
                          .image);
  }
  const Tensor oracle_logits =
      classify(m.pretext, extract_features(m.backbone, ImageBatch::concat(puzzles).to_tensor()));
  EXPECT_NEAR(loss, cross_entropy_oracle(oracle_logits, plan.labels), 1e-10);
}

TEST(Pretext, EnhanceThenAugmentEqualsAugmentThenEnhance) {
  const auto& corpus = tiny_corpus();
  TrainConfig cfg = tiny_config();
  cfg.predictor.fc_init_scale = 0.3;
  ModelSet m(cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const ImageBatch img = corpus.dark_test.image(i);
    const auto curve = m.predictor.predict_curves(img);
    for (int angle : {0, 90, 180, 270}) {
      const ImageBatch a = make_puzzle(apply_curves(img, curve), m.codebook, i % 6, angle).image;
      const ImageBatch b = apply_curves(make_puzzle(img, m.codebook, i % 6, angle).image, curve);
      EXPECT_EQ(a.values, b.values) << "angle " << angle;
    }
  }
}

TEST(Pretext, UntrainedHeadIsAtChance) {
  CorpusConfig cc;
  cc.seed = 8;
  cc.train_count = 64;
  cc.test_count = 10;
  const DeskCorpus corpus = build_desk_corpus(cc);
  TrainConfig cfg = tiny_config();
  cfg.codebook_size = 100;
  ModelSet m(cfg);
  const std::size_t batches = 25, batch = 32;
  const auto eval = evaluate_pretext(m, corpus.normal_train, cfg, false, batches, batch, 1);
  const double p = 0.01, sigma = std::sqrt(p * (1 - p) / static_cast<double>(batches * batch));
  EXPECT_LE(std::abs(eval.accuracy - p), 3 * sigma);
}

TEST(PseudoLabels, ThresholdEdgeCases) {
  const auto& corpus = tiny_corpus();
  ModelSet m(tiny_config());
  const auto all = generate_pseudo_labels(m, corpus.dark_train, 0.0);
  EXPECT_EQ(all.entries.size(), corpus.dark_train.count);
  EXPECT_TRUE(generate_pseudo_labels(m, corpus.dark_train, 1.0).entries.empty());

  const auto half = generate_pseudo_labels(m, corpus.dark_train, 0.15);
  std::set<std::string> ids;
  for (const auto& e : half.entries) {
    EXPECT_GE(e.confidence, 0.15);
    EXPECT_EQ(e.id, corpus.dark_train.ids[e.index]);
    ids.insert(e.id);
  }
  EXPECT_EQ(ids.size(), half.entries.size());
  const auto again = generate_pseudo_labels(m, corpus.dark_train, 0.15);
  ASSERT_EQ(again.entries.size(), half.entries.size());
  for (std::size_t i = 0; i < half.entries.size(); ++i) {
    EXPECT_EQ(again.entries[i].label, half.entries[i].label);
    EXPECT_EQ(again.entries[i].confidence, half.entries[i].confidence);
  }
  EXPECT_THROW(generate_pseudo_labels(m, corpus.dark_train, -0.1), ConfigError);
}

TEST(Finetune, ZeroStepsLeavesTheClassifierUnchanged) {
  const auto& corpus = tiny_corpus();
  ModelSet m(tiny_config());
  MetricsLog log;
  const auto pseudo = generate_pseudo_labels(m, corpus.dark_train, 0.0);
  PhaseBudget zero = tiny_config().finetune;
  zero.steps = 0;
  const auto r = finetune_downstream(m, corpus.normal_train, corpus.train_labels, corpus.dark_train, pseudo, zero, 1,
                                     log);
  EXPECT_EQ(r.checksums_before, r.checksums_after);
}

TEST(Finetune, OnlyTheClassifierChangesAndEmptyPseudoSetWarns) {
  const auto& corpus = tiny_corpus();
  ModelSet m(tiny_config());
  MetricsLog log;
  const PseudoLabelSet empty{0.9, {}};
  const auto r = finetune_downstream(m, corpus.normal_train, corpus.train_labels, corpus.dark_train, empty,
                                     tiny_config().finetune, 1, log);
  ASSERT_EQ(log.notes().size(), 1u);
  for (const auto& [group, sum] : r.checksums_before) {
    if (group == kClassifierGroup) {
      EXPECT_NE(r.checksums_after.at(group), sum);
    } else {
      EXPECT_EQ(r.checksums_after.at(group), sum) << group;
    }
  }
  m.store.unfreeze(kPredictorGroup);
  EXPECT_THROW(finetune_downstream(m, corpus.normal_train, corpus.train_labels, corpus.dark_train, empty,
                                   tiny_config().finetune, 1, log),
               ContractViolation);
}

TEST(Classifier, PretrainingLearnsTheCorpus) {
  CorpusConfig cc;
  cc.seed = 9;
  cc.train_count = 200;
  cc.test_count = 10;
  const DeskCorpus corpus = build_desk_corpus(cc);
  TrainConfig cfg = tiny_config();
  cfg.backbone.widths = {8, 16, 16, 16};
  cfg.head_hidden = 64;
  ModelSet m(cfg);
  MetricsLog log;
  const double before = evaluate_classifier(m, corpus.normal_train, corpus.train_labels);
  pretrain_classifier(m, corpus.normal_train, corpus.train_labels, {300, 16, 0.01, "sgd", 0.9}, 1, log);
  const double after = evaluate_classifier(m, corpus.normal_train, corpus.train_labels);
  EXPECT_GT(after, before + 0.3);
  EXPECT_THROW(evaluate_classifier(m, corpus.normal_train, {1, 2}), DimensionError);
}

TEST(CurveShape, DeviationOracle) {
  ConcaveCurveSet ref = analytic_inverse_curve(DegradationSpec{}, 256);
  const auto same = compare_curve_shape({ref, ref}, ref);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(same.learned_deviation[c], 0.0);
    EXPECT_GT(same.identity_deviation[c], 0.1);
  }
  EXPECT_TRUE(same.learned_closer_everywhere());

  ConcaveCurveSet identity = ref;
  for (auto& lut : identity.lut)
    for (std::size_t p = 0; p < 256; ++p) lut[p] = p / 255.0;
  const auto id = compare_curve_shape({identity}, ref);
  EXPECT_NEAR(id.learned_deviation[0], id.identity_deviation[0], 1e-15);
  EXPECT_FALSE(id.learned_closer_everywhere());
  // x^{1/4} vs x has mean absolute gap ∫(x^{1/4} - x) = 4/5 - 1/2 = 0.3 in the continuum.
  EXPECT_NEAR(id.identity_deviation[0], 0.3, 0.01);
}

TEST(Pipeline, RunsEndToEndAndIsDeterministic) {
  std::ostringstream s1, s2;
  MetricsLog l1(&s1), l2(&s2);
  ModelSet a(tiny_config()), b(tiny_config());
  const auto r1 = run_pipeline(a, tiny_corpus(), tiny_config(), l1);
  const auto r2 = run_pipeline(b, tiny_corpus(), tiny_config(), l2);
  EXPECT_EQ(r1.report.dump(), r2.report.dump());
  EXPECT_EQ(s1.str(), s2.str());

  const auto& rep = r1.report;
  EXPECT_EQ(rep["schema_version"], 1);
  EXPECT_EQ(rep["config"], tiny_config().to_json());
  for (const char* k : {"classifier", "phaseN", "phaseL", "finetune", "evaluation"}) EXPECT_TRUE(rep.contains(k)) << k;
  EXPECT_TRUE(rep["evaluation"].contains("sacc_plus_accuracy"));
  // Asymmetry across the whole pipeline, from the recorded checksums.
  EXPECT_EQ(rep["phaseN"]["checksums_before"]["backbone"], rep["checksums_final"]["backbone"]);
  EXPECT_EQ(rep["phaseN"]["checksums_after"]["pretext"], rep["checksums_final"]["pretext"]);
  EXPECT_EQ(rep["phaseL"]["checksums_after"]["predictor"], rep["checksums_final"]["predictor"]);
  EXPECT_EQ(rep["finetune"]["checksums_before"]["predictor"], rep["checksums_final"]["predictor"]);

  // Every metrics line is standalone JSON with the documented fields.
  std::istringstream lines(s1.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("phase"));
    n += j.contains("step");
  }
  EXPECT_EQ(n, 20u + 30u + 30u + 10u);
}

TEST(Pipeline, StopsAtTheRequestedStage) {
  ModelSet m(tiny_config());
  MetricsLog log;
  const auto r = run_pipeline(m, tiny_corpus(), tiny_config(), log, PipelineStage::PhaseN);
  EXPECT_TRUE(r.report.contains("phaseN"));
  EXPECT_FALSE(r.report.contains("phaseL"));
}

}  // namespace
}  // namespace sacc
