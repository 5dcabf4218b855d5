#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sacc {

/// One camera response: intensity samples over a uniform irradiance grid.
struct CrfRecord {
  std::string name;
  std::vector<double> samples;
};

/// Second differences whose magnitude is below this are treated as exactly zero.
inline constexpr double kCrfFlatTolerance = 1e-12;

struct CrfCurveStats {
  std::string name;
  std::size_t differences = 0;
  std::size_t negative = 0;
  double negative_fraction = 0.0;
  /// "concave", "convex", "linear" or "mixed".
  std::string shape;
};

struct CrfStatistics {
  std::size_t curves = 0;
  std::size_t differences = 0;
  std::size_t negative = 0;
  /// Pooled fraction of strictly negative second differences.
  double negative_fraction = 0.0;
  std::vector<CrfCurveStats> per_curve;

  nlohmann::json to_json() const;
};

/**
 * Reads named response curves. Accepts the DoRF layout (name lines followed
 * by "I =" irradiance and "B =" brightness blocks; only B is kept) as well as
 * plain name lines each followed by whitespace-separated floats.
 * Raises InputError when no curve is found.
 */
std::vector<CrfRecord> parse_crf_text(std::istream& in);
std::vector<CrfRecord> load_crf_file(const std::filesystem::path& path);

/// Writes records in the plain layout understood by parse_crf_text.
void write_crf_text(std::ostream& out, const std::vector<CrfRecord>& records);

/// InputError for an empty set, a record with < 3 samples, samples outside
/// [0,1] or a first sample above the last.
CrfStatistics analyze_crf_dataset(const std::vector<CrfRecord>& records);

/// Strictly concave analytic responses (power, log and exponential families)
/// sampled at `samples` points: the bundled synthetic set.
std::vector<CrfRecord> synthetic_concave_crfs(std::size_t samples = 1024);

}  // namespace sacc
