#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "sacc/curve/curve.hpp"
#include "sacc/curve/integral_operator.hpp"
#include "sacc/errors.hpp"
#include "sacc/pretext/jigsaw.hpp"
#include "sacc/tensor/ops.hpp"
#include "sacc/tensor/tape.hpp"

namespace sacc {
namespace {

const PermutationCodebook& codebook100() {
  static const PermutationCodebook book = build_codebook(100, 17);
  return book;
}

ImageBatch random_image(std::size_t side, std::size_t channels, std::mt19937_64& rng, std::size_t levels = 256) {
  ImageBatch img(1, side, side, channels, levels);
  std::uniform_int_distribution<std::size_t> lvl(0, levels - 1);
  for (double& v : img.values) v = static_cast<double>(lvl(rng)) / static_cast<double>(levels - 1);
  return img;
}

// FNV-1a over the exact bit patterns of one tile's values.
std::uint64_t tile_checksum(const ImageBatch& img, std::size_t tile) {
  const std::size_t t = img.height / 3, ty = tile / 3, tx = tile % 3;
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t y = 0; y < t; ++y) {
    for (std::size_t x = 0; x < t; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = img.at(0, ty * t + y, tx * t + x, c);
        const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
        for (std::size_t b = 0; b < sizeof(double); ++b) h = (h ^ bytes[b]) * 1099511628211ULL;
      }
    }
  }
  return h;
}

// Upper-tail probability of a chi-square statistic (Wilson–Hilferty cube-root
// normal approximation; accurate to well under 1e-3 for 99 degrees of freedom).
double chi_square_p_value(double statistic, double dof) {
  const double k = 2.0 / (9.0 * dof);
  const double z = (std::cbrt(statistic / dof) - (1.0 - k)) / std::sqrt(k);
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

TEST(Codebook, SizeOneIsIdentity) {
  const auto book = build_codebook(1, 3);
  ASSERT_EQ(book.size(), 1u);
  for (std::size_t i = 0; i < kJigsawTiles; ++i) EXPECT_EQ(book.permutations[0][i], i);
}

TEST(Codebook, SecondEntryIsDerangement) {
  const auto book = build_codebook(2, 3);
  ASSERT_EQ(book.size(), 2u);
  EXPECT_EQ(hamming_distance(book.permutations[0], book.permutations[1]), 9);
}

TEST(Codebook, RejectsOutOfRangeSize) {
  EXPECT_THROW(build_codebook(0, 1), ConfigError);
  EXPECT_THROW(build_codebook(kAllPermutations + 1, 1), ConfigError);
}

TEST(Codebook, DistinctWithIdentityFirst) {
  const auto& book = codebook100();
  ASSERT_EQ(book.size(), 100u);
  for (std::size_t i = 0; i < kJigsawTiles; ++i) EXPECT_EQ(book.permutations[0][i], i);
  auto sorted = book.permutations;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_GE(book.min_hamming_distance(), 6);
}

TEST(Codebook, SameSeedRegeneratesIdentically) {
  EXPECT_EQ(build_codebook(100, 17).to_json().dump(), codebook100().to_json().dump());
}

// Exhaustive oracle: every greedy step must realise the largest achievable
// minimum distance to the entries chosen before it.
TEST(Codebook, EachStepIsMaxMinOptimal) {
  const auto book = build_codebook(8, 5);
  std::vector<Permutation> all;
  Permutation p{};
  std::iota(p.begin(), p.end(), std::uint8_t{0});
  do {
    all.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  for (std::size_t step = 1; step < book.size(); ++step) {
    auto min_to_prefix = [&](const Permutation& q) {
      int d = 9;
      for (std::size_t j = 0; j < step; ++j) d = std::min(d, hamming_distance(q, book.permutations[j]));
      return d;
    };
    int best = 0;
    for (const auto& q : all) best = std::max(best, min_to_prefix(q));
    EXPECT_EQ(min_to_prefix(book.permutations[step]), best) << "step " << step;
  }
}

TEST(Codebook, JsonRoundTrip) {
  const auto& book = codebook100();
  const auto back = PermutationCodebook::from_json(nlohmann::json::parse(book.to_json().dump()));
  EXPECT_EQ(back.seed, book.seed);
  EXPECT_EQ(back.permutations, book.permutations);
}

TEST(Codebook, JsonRejectsMalformedEntries) {
  auto j = codebook100().to_json();
  j["permutations"][3] = {0, 1, 2, 3, 4, 5, 6, 7, 7};
  EXPECT_THROW(PermutationCodebook::from_json(j), InputError);
  EXPECT_THROW(PermutationCodebook::from_json(nlohmann::json{{"seed", 1}}), InputError);
  auto short_row = codebook100().to_json();
  short_row["permutations"][0] = {0, 1, 2};
  EXPECT_THROW(PermutationCodebook::from_json(short_row), InputError);
}

TEST(Puzzle, IdentityAtZeroDegreesIsNoOp) {
  std::mt19937_64 rng(1);
  const auto img = random_image(12, 3, rng);
  const auto puzzle = make_puzzle(img, codebook100(), 0, 0);
  EXPECT_EQ(puzzle.image.values, img.values);
  EXPECT_EQ(puzzle.permutation_index, 0u);
}

TEST(Puzzle, QuarterTurnIsCounterClockwise) {
  ImageBatch img(1, 3, 3, 1, 9);
  for (std::size_t i = 0; i < 9; ++i) img.values[i] = static_cast<double>(i) / 8.0;
  const auto out = make_puzzle(img, build_codebook(1, 0), 0, 90);
  const std::vector<double> expected{2, 5, 8, 1, 4, 7, 0, 3, 6};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(out.image.values[i] * 8.0, expected[i]);
}

TEST(Puzzle, FourQuarterTurnsComposeToIdentity) {
  std::mt19937_64 rng(2);
  auto img = random_image(9, 2, rng);
  const auto book = build_codebook(1, 0);
  ImageBatch cur = img;
  for (int i = 0; i < 4; ++i) cur = make_puzzle(cur, book, 0, 90).image;
  EXPECT_EQ(cur.values, img.values);
  EXPECT_EQ(make_puzzle(make_puzzle(img, book, 0, 180).image, book, 0, 180).image.values, img.values);
}

TEST(Puzzle, InversePermutationRecoversOriginal) {
  std::mt19937_64 rng(3);
  const auto img = random_image(15, 3, rng);
  for (std::size_t k : {1u, 17u, 99u}) {
    const auto puzzle = make_puzzle(img, codebook100(), k, 0);
    EXPECT_NE(puzzle.image.values, img.values);
    EXPECT_EQ(unshuffle(puzzle.image, codebook100().at(k)).values, img.values);
  }
}

TEST(Puzzle, TileMultisetIsPreserved) {
  std::mt19937_64 rng(4);
  const auto img = random_image(12, 3, rng);
  for (std::size_t k = 0; k < 20; ++k) {
    const auto puzzle = make_puzzle(img, codebook100(), k * 5, 0);
    std::vector<std::uint64_t> a, b;
    for (std::size_t t = 0; t < 9; ++t) {
      a.push_back(tile_checksum(img, t));
      b.push_back(tile_checksum(puzzle.image, t));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Puzzle, RotationsArePixelLossless) {
  std::mt19937_64 rng(5);
  const auto img = random_image(12, 3, rng);
  auto sorted_in = img.values;
  std::sort(sorted_in.begin(), sorted_in.end());
  for (int angle : {0, 90, 180, 270}) {
    auto out = make_puzzle(img, codebook100(), 42, angle).image.values;
    std::sort(out.begin(), out.end());
    EXPECT_EQ(out, sorted_in) << angle;
  }
}

TEST(Puzzle, RejectsBadGeometryAndAngles) {
  std::mt19937_64 rng(6);
  EXPECT_THROW(make_puzzle(random_image(10, 3, rng), codebook100(), 0, 0), DimensionError);
  ImageBatch wide(1, 9, 12, 3);
  EXPECT_THROW(make_puzzle(wide, codebook100(), 0, 0), DimensionError);
  EXPECT_THROW(make_puzzle(random_image(9, 3, rng), codebook100(), 0, 45), ConfigError);
  EXPECT_THROW(make_puzzle(random_image(9, 3, rng), codebook100(), 100, 0), IndexError);
  EXPECT_THROW(validate_angles({}), ConfigError);
}

TEST(Puzzle, CommutesWithLookupCurves) {
  std::mt19937_64 rng(7);
  const auto op = build_integral_operator(256, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    SecondDerivativePrediction v;
    v.channels.assign(3, std::vector<double>(255));
    for (auto& ch : v.channels) for (double& x : ch) x = u(rng);
    const auto curves = build_curve(v, op);
    const auto img = random_image(12, 3, rng);
    for (int angle : {0, 90, 180, 270}) {
      const std::size_t k = static_cast<std::size_t>(trial * 13 + angle / 90);
      const auto a = apply_curve(make_puzzle(img, codebook100(), k, angle).image, curves);
      const auto b = make_puzzle(apply_curve(img, curves), codebook100(), k, angle).image;
      EXPECT_EQ(a.values, b.values);
    }
  }
}

TEST(Puzzle, LabelsAreDecodable) {
  std::mt19937_64 rng(8);
  const auto img = random_image(12, 3, rng);
  std::uniform_int_distribution<std::size_t> pick(0, 99);
  for (int angle : {0, 90, 180, 270}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t k = pick(rng);
      const auto puzzle = make_puzzle(img, codebook100(), k, angle);
      const auto found = recover_permutation_index(img, puzzle.image, angle, codebook100());
      ASSERT_TRUE(found.has_value());
      EXPECT_EQ(*found, k);
    }
  }
  ImageBatch flat(1, 9, 9, 1);
  EXPECT_FALSE(recover_permutation_index(flat, flat, 0, codebook100()).has_value());
}

TEST(SampleBatch, RejectsEmptyInput) {
  std::mt19937_64 rng(9);
  ImageBatch empty(0, 9, 9, 3);
  EXPECT_THROW(sample_batch(empty, codebook100(), {0}, rng), InputError);
}

TEST(SampleBatch, LabelsAndAnglesStayInRange) {
  std::mt19937_64 rng(10);
  ImageBatch imgs(16, 9, 9, 3);
  const std::vector<int> angles{0, 180};
  for (const auto& s : sample_batch(imgs, codebook100(), angles, rng)) {
    EXPECT_LT(s.permutation_index, 100u);
    EXPECT_TRUE(s.angle == 0 || s.angle == 180);
  }
}

TEST(SampleBatch, ReplayIsIdentical) {
  std::mt19937_64 gen(11);
  ImageBatch imgs(8, 9, 9, 3);
  for (double& v : imgs.values) v = std::uniform_int_distribution<int>(0, 255)(gen) / 255.0;
  std::mt19937_64 a(99), b(99);
  const auto x = sample_batch(imgs, codebook100(), {0, 90, 180, 270}, a);
  const auto y = sample_batch(imgs, codebook100(), {0, 90, 180, 270}, b);
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].permutation_index, y[i].permutation_index);
    EXPECT_EQ(x[i].angle, y[i].angle);
    EXPECT_EQ(x[i].image.values, y[i].image.values);
  }
}

TEST(SampleBatch, LabelHistogramIsUniform) {
  std::mt19937_64 rng(12);
  std::vector<double> counts(100, 0.0);
  const auto plan = sample_plan(10000, codebook100(), {0, 90, 180, 270}, rng);
  for (auto l : plan.labels) counts[static_cast<std::size_t>(l)] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 100.0) * (c - 100.0) / 100.0;
  EXPECT_GT(chi_square_p_value(chi2, 99.0), 0.01) << "chi2 = " << chi2;
}

TEST(PuzzleTensor, MatchesImageRouteAndGradients) {
  std::mt19937_64 rng(13);
  ImageBatch imgs = ImageBatch::concat({random_image(9, 3, rng), random_image(9, 3, rng)});
  PuzzlePlan plan{{1, 0, 1}, {5, 0, 77}, {90, 270, 180}};
  Tensor x = imgs.to_tensor();
  const Tensor out = puzzle_tensor(x, plan, codebook100());
  const auto back = ImageBatch::from_tensor(out, 256);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto ref = make_puzzle(imgs.image(plan.source[b]), codebook100(), static_cast<std::size_t>(plan.labels[b]),
                                 plan.angles[b]);
    EXPECT_EQ(back.image(b).values, ref.image.values);
  }

  Tensor w = testing::random_tensor(out.shape(), rng, -1.0, 1.0);
  x.set_requires_grad(true);
  auto forward = [&] { return ops::sum(ops::mul(puzzle_tensor(x, plan, codebook100()), w)); };
  const auto res = testing::check_gradients(forward, {x}, 20, 1e-5, 3);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

}  // namespace
}  // namespace sacc
