#include "sacc/curve/curve_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sacc/errors.hpp"

namespace sacc {

void write_curve_csv(std::ostream& out, const ConcaveCurveSet& curves) {
  out << "channel,level,g\n";
  char buf[64];
  for (std::size_t ch = 0; ch < curves.channels(); ++ch) {
    for (std::size_t lvl = 0; lvl < curves.levels; ++lvl) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.9f\n", ch, lvl, curves.lut[ch][lvl]);
      out << buf;
    }
  }
}

void write_curve_csv(const std::filesystem::path& path, const ConcaveCurveSet& curves) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curve file " + path.string());
  write_curve_csv(out, curves);
}

ConcaveCurveSet read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("channel,level,g", 0) != 0) {
    throw InputError("curve CSV must start with header 'channel,level,g'");
  }
  std::map<std::size_t, std::map<std::size_t, double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::size_t ch = 0, lvl = 0;
    double g = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> ch >> c1 >> lvl >> c2 >> g) || c1 != ',' || c2 != ',') {
      throw InputError("malformed curve CSV row " + std::to_string(line_no) + ": " + line);
    }
    if (!rows[ch].emplace(lvl, g).second) {
      throw InputError("duplicate curve CSV entry at row " + std::to_string(line_no));
    }
  }
  if (rows.empty()) throw InputError("curve CSV has no rows");
  ConcaveCurveSet set;
  set.levels = rows.begin()->second.size();
  std::size_t expected_channel = 0;
  for (const auto& [ch, levels] : rows) {
    if (ch != expected_channel++ || levels.size() != set.levels || levels.rbegin()->first + 1 != set.levels) {
      throw InputError("curve CSV does not describe a dense channel×level grid");
    }
    std::vector<double> lut;
    lut.reserve(levels.size());
    for (const auto& [lvl, g] : levels) lut.push_back(g);
    set.lut.push_back(std::move(lut));
  }
  if (set.levels < 2) throw InputError("curve CSV needs at least 2 levels per channel");
  set.degenerate.assign(set.lut.size(), false);
  return set;
}

ConcaveCurveSet read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve file " + path.string());
  return read_curve_csv(in);
}

}  // namespace sacc
