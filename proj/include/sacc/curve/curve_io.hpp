#pragma once

#include <filesystem>
#include <iosfwd>

#include "sacc/curve/curve.hpp"

namespace sacc {

/// CSV with header `channel,level,g`, P rows per channel, g printed with 9 decimals.
void write_curve_csv(std::ostream& out, const ConcaveCurveSet& curves);
void write_curve_csv(const std::filesystem::path& path, const ConcaveCurveSet& curves);

/// Parses the format written by write_curve_csv. Rows may come in any order but
/// every (channel, level) pair of a dense grid must appear exactly once.
ConcaveCurveSet read_curve_csv(std::istream& in);
ConcaveCurveSet read_curve_csv(const std::filesystem::path& path);

}  // namespace sacc
