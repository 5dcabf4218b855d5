#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sacc/data/image.hpp"
#include "sacc/tensor/tensor.hpp"

namespace sacc {

inline constexpr std::size_t kJigsawGrid = 3;
inline constexpr std::size_t kJigsawTiles = kJigsawGrid * kJigsawGrid;
inline constexpr std::size_t kAllPermutations = 362880;  // 9!

/// perm[t] is the source tile shown at output position t (row-major 3×3).
using Permutation = std::array<std::uint8_t, kJigsawTiles>;

/// The K permutations that form the jigsaw label space. Entry 0 is the identity.
struct PermutationCodebook {
  std::uint64_t seed = 0;
  std::vector<Permutation> permutations;

  std::size_t size() const { return permutations.size(); }
  const Permutation& at(std::size_t index) const;

  /// Minimum pairwise Hamming distance over the codebook (9 when K == 1).
  int min_hamming_distance() const;

  nlohmann::json to_json() const;
  static PermutationCodebook from_json(const nlohmann::json& j);
};

int hamming_distance(const Permutation& a, const Permutation& b);

/**
 * Greedy max-min Hamming selection over all 9! orderings, seeded with the
 * identity. Each step adds a candidate whose smallest distance to the chosen
 * set is largest; ties are broken by a generator seeded with `seed`.
 * Cost is O(K·9!), which is fine for the usual K <= 1000.
 */
PermutationCodebook build_codebook(std::size_t k, std::uint64_t seed);

/// Lossless rotations only. Anything else raises ConfigError.
void validate_angles(const std::vector<int>& angles);

/**
 * Source-pixel map of one rotated jigsaw: output pixel i (row-major over a
 * side×side image) copies input pixel map[i]. The image is first rotated
 * counter-clockwise by `angle`, then its 3×3 tiles are reordered by `perm`.
 */
std::vector<std::size_t> puzzle_pixel_map(std::size_t side, const Permutation& perm, int angle);

struct PuzzleSample {
  ImageBatch image;
  std::size_t permutation_index = 0;
  int angle = 0;
};

/// Rotates then shuffles a single square image whose side is divisible by 3.
PuzzleSample make_puzzle(const ImageBatch& image, const PermutationCodebook& codebook, std::size_t perm_index,
                         int angle);

/// Undoes the tile shuffle of an angle-0 puzzle.
ImageBatch unshuffle(const ImageBatch& puzzle, const Permutation& perm);

/// Identifies which codebook entry produced `puzzle` from `original`, or nullopt
/// when the tiles cannot be matched (e.g. duplicate tiles).
std::optional<std::size_t> recover_permutation_index(const ImageBatch& original, const ImageBatch& puzzle, int angle,
                                                     const PermutationCodebook& codebook);

/// Labels drawn for one batch: sample i puzzles image `source[i]`.
struct PuzzlePlan {
  std::vector<std::size_t> source;
  std::vector<std::int64_t> labels;
  std::vector<int> angles;
};

/// One puzzle per source image with a uniformly drawn permutation index and angle.
PuzzlePlan sample_plan(std::size_t count, const PermutationCodebook& codebook, const std::vector<int>& angles,
                       std::mt19937_64& rng);

/// Materializes a plan on an images batch. Raises InputError on an empty batch.
std::vector<PuzzleSample> sample_batch(const ImageBatch& images, const PermutationCodebook& codebook,
                                       const std::vector<int>& angles, std::mt19937_64& rng);

/// Differentiable form: applies the plan to N×C×S×S images -> plan-size×C×S×S.
Tensor puzzle_tensor(const Tensor& images, const PuzzlePlan& plan, const PermutationCodebook& codebook);

}  // namespace sacc
