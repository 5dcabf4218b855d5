#include "sacc/pretext/jigsaw.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>

#include "sacc/errors.hpp"
#include "sacc/tensor/ops.hpp"

namespace sacc {

namespace {

// Input pixel that lands at (y, x) after a counter-clockwise rotation.
std::size_t rotated_source(std::size_t side, std::size_t y, std::size_t x, int angle) {
  const std::size_t last = side - 1;
  switch (angle) {
    case 0:
      return y * side + x;
    case 90:
      return x * side + (last - y);
    case 180:
      return (last - y) * side + (last - x);
    case 270:
      return (last - x) * side + y;
    default:
      throw ConfigError("unsupported rotation angle " + std::to_string(angle));
  }
}

void require_puzzle_geometry(std::size_t height, std::size_t width) {
  if (height != width || height % kJigsawGrid != 0 || height == 0) {
    throw DimensionError("jigsaw needs a square image with side divisible by 3, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
}

ImageBatch remap(const ImageBatch& image, const std::vector<std::size_t>& map) {
  ImageBatch out = image;
  const std::size_t ch = image.channels;
  for (std::size_t i = 0; i < map.size(); ++i) {
    for (std::size_t c = 0; c < ch; ++c) out.values[i * ch + c] = image.values[map[i] * ch + c];
  }
  return out;
}

std::vector<double> tile_values(const ImageBatch& img, std::size_t tile) {
  const std::size_t t = img.height / kJigsawGrid;
  const std::size_t ty = tile / kJigsawGrid, tx = tile % kJigsawGrid;
  std::vector<double> out;
  out.reserve(t * t * img.channels);
  for (std::size_t y = 0; y < t; ++y) {
    for (std::size_t x = 0; x < t; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.push_back(img.at(0, ty * t + y, tx * t + x, c));
    }
  }
  return out;
}

}  // namespace

const Permutation& PermutationCodebook::at(std::size_t index) const {
  if (index >= permutations.size()) {
    throw IndexError("permutation index " + std::to_string(index) + " outside codebook of size " +
                     std::to_string(permutations.size()));
  }
  return permutations[index];
}

int hamming_distance(const Permutation& a, const Permutation& b) {
  int d = 0;
  for (std::size_t i = 0; i < kJigsawTiles; ++i) d += a[i] != b[i];
  return d;
}

int PermutationCodebook::min_hamming_distance() const {
  int best = static_cast<int>(kJigsawTiles);
  for (std::size_t i = 0; i < permutations.size(); ++i) {
    for (std::size_t j = i + 1; j < permutations.size(); ++j) {
      best = std::min(best, hamming_distance(permutations[i], permutations[j]));
    }
  }
  return best;
}

nlohmann::json PermutationCodebook::to_json() const {
  nlohmann::json perms = nlohmann::json::array();
  for (const auto& p : permutations) perms.push_back(std::vector<int>(p.begin(), p.end()));
  return {{"schema_version", 1},
          {"k", permutations.size()},
          {"seed", seed},
          {"tiles", kJigsawTiles},
          {"selection", "greedy-max-min-hamming"},
          {"permutations", perms}};
}

PermutationCodebook PermutationCodebook::from_json(const nlohmann::json& j) {
  PermutationCodebook book;
  try {
    book.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& row : j.at("permutations")) {
      auto values = row.get<std::vector<int>>();
      if (values.size() != kJigsawTiles) throw InputError("codebook permutation must list 9 tiles");
      Permutation p{};
      std::vector<bool> seen(kJigsawTiles, false);
      for (std::size_t i = 0; i < kJigsawTiles; ++i) {
        if (values[i] < 0 || values[i] >= static_cast<int>(kJigsawTiles) || seen[values[i]]) {
          throw InputError("codebook entry is not a permutation of 0..8");
        }
        seen[values[i]] = true;
        p[i] = static_cast<std::uint8_t>(values[i]);
      }
      book.permutations.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed codebook JSON: ") + e.what());
  }
  if (book.permutations.empty()) throw InputError("codebook JSON has no permutations");
  if (j.contains("k") && j.at("k").get<std::size_t>() != book.permutations.size()) {
    throw InputError("codebook JSON 'k' does not match its permutation count");
  }
  return book;
}

PermutationCodebook build_codebook(std::size_t k, std::uint64_t seed) {
  if (k < 1 || k > kAllPermutations) {
    throw ConfigError("codebook size must lie in [1, 9!], got " + std::to_string(k));
  }
  std::vector<Permutation> all;
  all.reserve(kAllPermutations);
  Permutation p{};
  std::iota(p.begin(), p.end(), std::uint8_t{0});
  do {
    all.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));

  PermutationCodebook book;
  book.seed = seed;
  book.permutations.push_back(all.front());  // identity
  std::vector<std::uint8_t> min_dist(all.size());
  std::vector<bool> taken(all.size(), false);
  taken[0] = true;
  for (std::size_t i = 0; i < all.size(); ++i) min_dist[i] = static_cast<std::uint8_t>(hamming_distance(all[i], all[0]));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> ties;
  while (book.permutations.size() < k) {
    std::uint8_t best = 0;
    ties.clear();
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (taken[i]) continue;
      if (min_dist[i] > best) {
        best = min_dist[i];
        ties.clear();
      }
      if (min_dist[i] == best) ties.push_back(i);
    }
    const std::size_t pick = ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
    taken[pick] = true;
    book.permutations.push_back(all[pick]);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto d = static_cast<std::uint8_t>(hamming_distance(all[i], all[pick]));
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }
  return book;
}

void validate_angles(const std::vector<int>& angles) {
  if (angles.empty()) throw ConfigError("rotation angle set must not be empty");
  for (int a : angles) {
    if (a != 0 && a != 90 && a != 180 && a != 270) {
      throw ConfigError("rotation angle " + std::to_string(a) + " is not a lossless multiple of 90 in [0, 270]");
    }
  }
}

std::vector<std::size_t> puzzle_pixel_map(std::size_t side, const Permutation& perm, int angle) {
  require_puzzle_geometry(side, side);
  const std::size_t t = side / kJigsawGrid;
  std::vector<std::size_t> map(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t tile = (y / t) * kJigsawGrid + x / t;
      const std::size_t src_tile = perm[tile];
      const std::size_t ry = (src_tile / kJigsawGrid) * t + y % t;
      const std::size_t rx = (src_tile % kJigsawGrid) * t + x % t;
      map[y * side + x] = rotated_source(side, ry, rx, angle);
    }
  }
  return map;
}

PuzzleSample make_puzzle(const ImageBatch& image, const PermutationCodebook& codebook, std::size_t perm_index,
                         int angle) {
  if (image.count != 1) throw DimensionError("make_puzzle expects a single image");
  require_puzzle_geometry(image.height, image.width);
  validate_angles({angle});
  return {remap(image, puzzle_pixel_map(image.height, codebook.at(perm_index), angle)), perm_index, angle};
}

ImageBatch unshuffle(const ImageBatch& puzzle, const Permutation& perm) {
  require_puzzle_geometry(puzzle.height, puzzle.width);
  Permutation inverse{};
  for (std::size_t t = 0; t < kJigsawTiles; ++t) inverse[perm[t]] = static_cast<std::uint8_t>(t);
  return remap(puzzle, puzzle_pixel_map(puzzle.height, inverse, 0));
}

std::optional<std::size_t> recover_permutation_index(const ImageBatch& original, const ImageBatch& puzzle, int angle,
                                                     const PermutationCodebook& codebook) {
  Permutation identity{};
  std::iota(identity.begin(), identity.end(), std::uint8_t{0});
  const ImageBatch rotated = remap(original, puzzle_pixel_map(original.height, identity, angle));
  std::map<std::vector<double>, std::size_t> tiles;
  for (std::size_t t = 0; t < kJigsawTiles; ++t) {
    if (!tiles.emplace(tile_values(rotated, t), t).second) return std::nullopt;
  }
  Permutation found{};
  for (std::size_t t = 0; t < kJigsawTiles; ++t) {
    auto it = tiles.find(tile_values(puzzle, t));
    if (it == tiles.end()) return std::nullopt;
    found[t] = static_cast<std::uint8_t>(it->second);
  }
  for (std::size_t i = 0; i < codebook.size(); ++i) {
    if (codebook.permutations[i] == found) return i;
  }
  return std::nullopt;
}

PuzzlePlan sample_plan(std::size_t count, const PermutationCodebook& codebook, const std::vector<int>& angles,
                       std::mt19937_64& rng) {
  if (count == 0) throw InputError("cannot sample puzzles from an empty image set");
  validate_angles(angles);
  std::uniform_int_distribution<std::size_t> perm_dist(0, codebook.size() - 1);
  std::uniform_int_distribution<std::size_t> angle_dist(0, angles.size() - 1);
  PuzzlePlan plan;
  for (std::size_t i = 0; i < count; ++i) {
    plan.source.push_back(i);
    plan.labels.push_back(static_cast<std::int64_t>(perm_dist(rng)));
    plan.angles.push_back(angles[angle_dist(rng)]);
  }
  return plan;
}

std::vector<PuzzleSample> sample_batch(const ImageBatch& images, const PermutationCodebook& codebook,
                                       const std::vector<int>& angles, std::mt19937_64& rng) {
  PuzzlePlan plan = sample_plan(images.count, codebook, angles, rng);
  std::vector<PuzzleSample> out;
  out.reserve(images.count);
  for (std::size_t i = 0; i < images.count; ++i) {
    out.push_back(make_puzzle(images.image(plan.source[i]), codebook, static_cast<std::size_t>(plan.labels[i]),
                              plan.angles[i]));
  }
  return out;
}

Tensor puzzle_tensor(const Tensor& images, const PuzzlePlan& plan, const PermutationCodebook& codebook) {
  if (images.rank() != 4) throw DimensionError("puzzle_tensor expects N×C×S×S images");
  const std::size_t n = images.dim(0), ch = images.dim(1), side = images.dim(2);
  require_puzzle_geometry(side, images.dim(3));
  const std::size_t plane = side * side;
  auto index = std::make_shared<std::vector<std::size_t>>(plan.source.size() * ch * plane);
  for (std::size_t b = 0; b < plan.source.size(); ++b) {
    if (plan.source[b] >= n) throw IndexError("puzzle plan references image " + std::to_string(plan.source[b]));
    const auto map = puzzle_pixel_map(side, codebook.at(static_cast<std::size_t>(plan.labels[b])), plan.angles[b]);
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t src_base = (plan.source[b] * ch + c) * plane;
      const std::size_t dst_base = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) (*index)[dst_base + i] = src_base + map[i];
    }
  }
  return ops::gather(images, index, Shape{plan.source.size(), ch, side, side});
}

}  // namespace sacc
