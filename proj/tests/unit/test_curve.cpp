#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "sacc/curve/curve.hpp"
#include "sacc/curve/curve_io.hpp"
#include "sacc/curve/integral_operator.hpp"
#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc {
namespace {

// Integration by explicit running sums, independent of the matrix route:
// `order - 1` suffix sums (the A factors) followed by one prefix sum with a
// leading zero (the B factor).
std::vector<double> cumulative_sum_oracle(const std::vector<double>& v, int order) {
  if (order == 0) {
    std::vector<double> c{0.0};
    c.insert(c.end(), v.begin(), v.end());
    return c;
  }
  std::vector<double> d = v;
  for (int k = 1; k < order; ++k) {
    for (std::size_t i = d.size() - 1; i-- > 0;) d[i] += d[i + 1];
  }
  std::vector<double> c(d.size() + 1, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) c[i + 1] = c[i] + d[i];
  return c;
}

SecondDerivativePrediction single_channel(std::vector<double> v) { return {{std::move(v)}}; }

TEST(IntegralOperator, OrderTwoHandMatrix) {
  IntegralOperator op = build_integral_operator(4, 2);
  const std::vector<double> expected{0, 0, 0, 1, 1, 1, 1, 2, 2, 1, 2, 3};
  EXPECT_EQ(op.matrix(), expected);
}

TEST(IntegralOperator, OrderOneIsStrictlyLowerOnes) {
  IntegralOperator op = build_integral_operator(4, 1);
  const std::vector<double> expected{0, 0, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1};
  EXPECT_EQ(op.matrix(), expected);
}

TEST(IntegralOperator, StructuralInvariants) {
  for (std::size_t levels : {2u, 5u, 64u, 256u}) {
    IntegralOperator op = build_integral_operator(levels, 2);
    for (std::size_t c = 0; c < levels - 1; ++c) {
      EXPECT_EQ(op.at(0, c), 0.0);
      for (std::size_t r = 1; r < levels; ++r) {
        const double x = op.at(r, c);
        EXPECT_GE(x, 0.0);
        EXPECT_EQ(x, std::floor(x));
        EXPECT_GE(x, op.at(r - 1, c));
      }
    }
  }
}

TEST(IntegralOperator, UnsupportedOrderOrDepth) {
  EXPECT_THROW(build_integral_operator(256, 4), ConfigError);
  EXPECT_THROW(build_integral_operator(256, -1), ConfigError);
  EXPECT_THROW(build_integral_operator(1, 2), ConfigError);
}

TEST(IntegralOperator, MatchesCumulativeSumOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int order = 0; order <= 3; ++order) {
    IntegralOperator op = build_integral_operator(256, order);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(255);
      for (double& x : v) x = dist(rng);
      const auto expected = cumulative_sum_oracle(v, order);
      const auto got = op.apply(v);
      for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], expected[i], 1e-12 * std::max(1.0, std::abs(expected[i])));
    }
  }
}

TEST(BuildCurve, WorkedExamples) {
  IntegralOperator op = build_integral_operator(4, 2);
  ConcaveCurveSet ident = build_curve(single_channel({0, 0, 1}), op);
  const std::vector<double> third{0, 1.0 / 3, 2.0 / 3, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ident.lut[0][i], third[i], 1e-15);

  ConcaveCurveSet concave = build_curve(single_channel({1, 1, 1}), op);
  const std::vector<double> expected{0, 0.5, 5.0 / 6, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(concave.lut[0][i], expected[i], 1e-15);
  EXPECT_FALSE(concave.degenerate[0]);
}

TEST(BuildCurve, DegenerateInputFallsBackToIdentity) {
  IntegralOperator op = build_integral_operator(4, 2);
  ConcaveCurveSet set = build_curve(single_channel({0, 0, 0}), op);
  EXPECT_TRUE(set.degenerate[0]);
  const std::vector<double> third{0, 1.0 / 3, 2.0 / 3, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(set.lut[0][i], third[i], 1e-15);
}

TEST(BuildCurve, NegativeCoefficientIsContractViolation) {
  IntegralOperator op = build_integral_operator(4, 2);
  EXPECT_THROW(build_curve(single_channel({1, -0.5, 1}), op), ContractViolation);
  EXPECT_NO_THROW(build_curve(single_channel({1, -0.5, 1}), build_integral_operator(4, 0)));
}

TEST(BuildCurve, ChannelsAreNormalizedIndependently) {
  IntegralOperator op = build_integral_operator(4, 2);
  ConcaveCurveSet set = build_curve({{{1, 1, 1}, {100, 100, 100}, {0, 0, 7}}}, op);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(set.lut[0][i], set.lut[1][i], 1e-15);
  EXPECT_NEAR(set.lut[2][1], 1.0 / 3, 1e-15);
}

TEST(BuildCurve, RandomOrderTwoCurvesAreValid) {
  IntegralOperator op = build_integral_operator(256, 2);
  std::mt19937_64 rng(22);
  std::exponential_distribution<double> dist(1.0);
  std::bernoulli_distribution sparse(0.3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(255);
    for (double& x : v) x = sparse(rng) ? 0.0 : dist(rng);
    auto report = curve_concavity_report(build_curve(single_channel(v), op));
    ASSERT_TRUE(report.valid(1e-12));
  }
}

TEST(ConcavityReport, IdentityCurve) {
  auto report = curve_concavity_report(ConcaveCurveSet::identity(256, 3));
  ASSERT_EQ(report.channels.size(), 3u);
  for (const auto& ch : report.channels) {
    EXPECT_NEAR(ch.min_first_difference, 1.0 / 255, 1e-15);
    EXPECT_NEAR(ch.max_second_difference, 0.0, 1e-15);
    EXPECT_EQ(ch.first_value, 0.0);
    EXPECT_EQ(ch.last_value, 1.0);
  }
}

TEST(ConcavityReport, WorkedExampleDifferences) {
  ConcaveCurveSet set = build_curve(single_channel({1, 1, 1}), build_integral_operator(4, 2));
  const auto& g = set.lut[0];
  EXPECT_NEAR(g[1] - g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[2] - g[1], 1.0 / 3, 1e-15);
  EXPECT_NEAR(g[3] - g[2], 1.0 / 6, 1e-15);
  auto report = curve_concavity_report(set);
  EXPECT_NEAR(report.channels[0].min_first_difference, 1.0 / 6, 1e-15);
  EXPECT_LT(report.channels[0].max_second_difference, 0.0);
}

ImageBatch level_image(std::size_t levels, const std::vector<std::size_t>& lv, std::size_t channels = 1) {
  ImageBatch img(1, 1, lv.size(), channels, levels);
  for (std::size_t x = 0; x < lv.size(); ++x) {
    for (std::size_t c = 0; c < channels; ++c) img.at(0, 0, x, c) = static_cast<double>(lv[x]) / static_cast<double>(levels - 1);
  }
  return img;
}

TEST(ApplyCurve, IdentityCurveIsExact) {
  ImageBatch img = level_image(256, {0, 1, 17, 128, 254, 255}, 3);
  ImageBatch out = apply_curve(img, ConcaveCurveSet::identity(256, 3));
  EXPECT_EQ(out.values, img.values);
}

TEST(ApplyCurve, LookupByLevel) {
  ConcaveCurveSet set = build_curve(single_channel({1, 0, 0}), build_integral_operator(4, 2));
  ImageBatch out = apply_curve(level_image(4, {0, 1, 2, 3}), set);
  EXPECT_EQ(out.values, (std::vector<double>{0, 1, 1, 1}));
}

TEST(ApplyCurve, Requantization) {
  ConcaveCurveSet set = build_curve(single_channel({1, 1, 1}), build_integral_operator(4, 2));
  ImageBatch out = apply_curve(level_image(4, {0, 1, 2, 3}), set, {.requantize = true});
  // g = (0, 1/2, 5/6, 1) -> round(g*3)/3
  EXPECT_NEAR(out.values[1], 2.0 / 3, 1e-15);
  EXPECT_NEAR(out.values[2], 1.0, 1e-15);
}

TEST(ApplyCurve, MismatchedDepthOrChannels) {
  ImageBatch img = level_image(256, {0, 1}, 3);
  EXPECT_THROW(apply_curve(img, ConcaveCurveSet::identity(16, 3)), DimensionError);
  EXPECT_THROW(apply_curve(img, ConcaveCurveSet::identity(256, 1)), DimensionError);
}

TEST(ApplyCurve, ChannelSeparable) {
  std::mt19937_64 rng(23);
  ImageBatch img(1, 4, 4, 3, 256);
  std::uniform_int_distribution<int> lv(0, 255);
  for (double& v : img.values) v = lv(rng) / 255.0;
  ConcaveCurveSet a = build_curve({{std::vector<double>(255, 1.0), std::vector<double>(255, 2.0), std::vector<double>(255, 0.5)}},
                                  build_integral_operator(256, 2));
  ConcaveCurveSet b = a;
  b.lut[1] = ConcaveCurveSet::identity(256, 1).lut[0];
  ImageBatch oa = apply_curve(img, a), ob = apply_curve(img, b);
  for (std::size_t i = 0; i < oa.values.size(); ++i) {
    if (i % 3 == 1) continue;
    EXPECT_EQ(oa.values[i], ob.values[i]);
  }
}

TEST(ApplyCurveTensor, GradientIsPerLevelCount) {
  ImageBatch img = level_image(4, {0, 2, 2, 3, 2, 0});
  Tensor g(Shape{1, 1, 4}, std::vector<double>{0, 0.4, 0.7, 1.0});
  g.set_requires_grad(true);
  GradientTape tape;
  Tensor out = apply_curve_tensor(g, img);
  tape.backward(ops::sum(out));
  EXPECT_EQ(std::vector<double>(g.grad().begin(), g.grad().end()), (std::vector<double>{2, 0, 3, 1}));

  auto fd = testing::check_gradients([&] { return ops::sum(apply_curve_tensor(g, img)); }, {g});
  EXPECT_LT(fd.max_rel_error, 1e-8);
}

TEST(BuildCurveTensor, MatchesPlainRouteAndFiniteDifferences) {
  std::mt19937_64 rng(24);
  for (int order : {0, 1, 2, 3}) {
    IntegralOperator op = build_integral_operator(16, order);
    Tensor v = testing::random_tensor({2, 3, 15}, rng, 0.1, 1.0);
    Tensor g = build_curve_tensor(v, op);
    for (std::size_t n = 0; n < 2; ++n) {
      SecondDerivativePrediction pred;
      for (std::size_t c = 0; c < 3; ++c) {
        auto row = v.data().subspan((n * 3 + c) * 15, 15);
        pred.channels.emplace_back(row.begin(), row.end());
      }
      ConcaveCurveSet plain = build_curve(pred, op);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 16; ++i) ASSERT_NEAR(g[(n * 3 + c) * 16 + i], plain.lut[c][i], 1e-14);
      }
    }
    std::mt19937_64 wr(25);
    Tensor w = testing::random_tensor({2, 3, 16}, wr);
    auto res = testing::check_gradients([&] { return ops::sum(ops::mul(build_curve_tensor(v, op), w)); }, {v});
    EXPECT_LT(res.max_rel_error, 1e-5) << "order " << order;
  }
}

TEST(ApplyCurveVideo, SharedCurveAcrossFrames) {
  std::mt19937_64 rng(26);
  VideoClip clip{ImageBatch(4, 3, 5, 3, 256)};
  std::uniform_int_distribution<int> lv(0, 255);
  for (double& v : clip.frames.values) v = lv(rng) / 255.0;
  // Make frames 0 and 1 identical.
  std::copy_n(clip.frames.values.begin(), clip.frames.image_size(), clip.frames.values.begin() + clip.frames.image_size());
  ConcaveCurveSet curves = build_curve({{std::vector<double>(255, 1.0), std::vector<double>(255, 3.0), std::vector<double>(255, 0.2)}},
                                       build_integral_operator(256, 2));
  EnhancedClip out = apply_curve_video(clip, curves);
  ASSERT_EQ(out.frame_curves.size(), 4u);
  for (const auto& fc : out.frame_curves) EXPECT_EQ(fc.lut, out.frame_curves.front().lut);
  const std::size_t sz = clip.frames.image_size();
  for (std::size_t i = 0; i < sz; ++i) EXPECT_EQ(out.clip.frames.values[i], out.clip.frames.values[sz + i]);
  for (std::size_t t = 0; t < 4; ++t) {
    ImageBatch single = apply_curve(clip.frames.image(t), curves);
    for (std::size_t i = 0; i < sz; ++i) ASSERT_EQ(single.values[i], out.clip.frames.values[t * sz + i]);
  }
}

TEST(ApplyGamma, AnalyticCases) {
  ImageBatch img = level_image(256, {0, 64, 255});
  img.values[1] = 0.25;
  ImageBatch same = apply_gamma(img, {{1.0}});
  EXPECT_EQ(same.values, img.values);
  ImageBatch half = apply_gamma(img, {{0.5}});
  EXPECT_DOUBLE_EQ(half.values[1], 0.5);
  for (int i = 0; i <= 100; ++i) {
    ImageBatch p = level_image(256, {0});
    p.values[0] = i / 100.0;
    EXPECT_GE(apply_gamma(p, {{0.4}}).values[0], p.values[0]);
  }
  EXPECT_THROW(apply_gamma(img, {{0.0}}), ConfigError);
  EXPECT_THROW(apply_gamma(img, {{0.5, 0.5}}), DimensionError);
}

TEST(CurveCsv, RoundTripAndFormat) {
  ConcaveCurveSet set = build_curve({{{1, 1, 1}, {0, 0, 1}}}, build_integral_operator(4, 2));
  std::stringstream ss;
  write_curve_csv(ss, set);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "channel,level,g");
  EXPECT_NE(text.find("0,2,0.833333333\n"), std::string::npos);
  ConcaveCurveSet back = read_curve_csv(ss);
  ASSERT_EQ(back.channels(), 2u);
  ASSERT_EQ(back.levels, 4u);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.lut[c][i], set.lut[c][i], 5e-10);
  }
}

TEST(CurveCsv, RejectsMalformed) {
  std::stringstream no_header("0,0,0.0\n");
  EXPECT_THROW(read_curve_csv(no_header), InputError);
  std::stringstream gap("channel,level,g\n0,0,0\n0,2,1\n");
  EXPECT_THROW(read_curve_csv(gap), InputError);
  std::stringstream junk("channel,level,g\n0;0;0\n");
  EXPECT_THROW(read_curve_csv(junk), InputError);
}

}  // namespace
}  // namespace sacc
