#include "sacc/data/crf.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sacc/errors.hpp"

namespace sacc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Parses every token of `line` as a double; false if any token is not numeric.
bool parse_numbers(const std::string& line, std::vector<double>& out) {
  std::istringstream ss(line);
  std::string tok;
  std::vector<double> values;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) return false;
      values.push_back(v);
    } catch (const std::exception&) {
      return false;
    }
  }
  out.insert(out.end(), values.begin(), values.end());
  return true;
}

}  // namespace

nlohmann::json CrfStatistics::to_json() const {
  nlohmann::json curves_json = nlohmann::json::array();
  for (const auto& c : per_curve) {
    curves_json.push_back({{"name", c.name},
                           {"differences", c.differences},
                           {"negative", c.negative},
                           {"negative_fraction", c.negative_fraction},
                           {"shape", c.shape}});
  }
  return {{"curves", curves},
          {"differences", differences},
          {"negative", negative},
          {"negative_fraction", negative_fraction},
          {"per_curve", curves_json}};
}

std::vector<CrfRecord> parse_crf_text(std::istream& in) {
  enum class Block { None, Irradiance, Brightness };
  std::vector<CrfRecord> records;
  std::vector<std::string> name_parts;
  std::vector<double> samples;
  Block block = Block::None;

  auto flush = [&] {
    if (!samples.empty()) {
      std::string name;
      for (const auto& part : name_parts) name += (name.empty() ? "" : " ") + part;
      if (name.empty()) name = "curve_" + std::to_string(records.size());
      records.push_back({name, samples});
      samples.clear();
      name_parts.clear();
    }
    block = Block::None;
  };

  std::string raw;
  while (std::getline(in, raw)) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("I =", 0) == 0 || line.rfind("I=", 0) == 0) {
      flush();
      block = Block::Irradiance;
      line = trim(line.substr(line.find('=') + 1));
      if (line.empty()) continue;
    } else if (line.rfind("B =", 0) == 0 || line.rfind("B=", 0) == 0) {
      if (!samples.empty()) flush();
      block = Block::Brightness;
      line = trim(line.substr(line.find('=') + 1));
      if (line.empty()) continue;
    }
    std::vector<double> values;
    if (parse_numbers(line, values)) {
      if (block != Block::Irradiance) samples.insert(samples.end(), values.begin(), values.end());
      continue;
    }
    // A text line: it closes any open record and names the next one.
    flush();
    name_parts.push_back(line);
  }
  flush();
  if (records.empty()) throw InputError("no response curves found in CRF text");
  return records;
}

std::vector<CrfRecord> load_crf_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open CRF file");
  try {
    return parse_crf_text(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_crf_text(std::ostream& out, const std::vector<CrfRecord>& records) {
  char buf[32];
  for (const auto& r : records) {
    out << r.name << "\n";
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.samples[i]);
      out << buf << ((i + 1) % 8 == 0 || i + 1 == r.samples.size() ? "\n" : " ");
    }
  }
}

CrfStatistics analyze_crf_dataset(const std::vector<CrfRecord>& records) {
  if (records.empty()) throw InputError("CRF analysis needs at least one record");
  CrfStatistics stats;
  for (const auto& r : records) {
    const auto& s = r.samples;
    if (s.size() < 3) throw InputError("CRF record '" + r.name + "' has fewer than 3 samples");
    for (double v : s) {
      if (!(v >= 0.0 && v <= 1.0)) throw InputError("CRF record '" + r.name + "' has a sample outside [0,1]");
    }
    if (s.front() > s.back()) throw InputError("CRF record '" + r.name + "' decreases end to end");
    CrfCurveStats c;
    c.name = r.name;
    std::size_t positive = 0;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) {
      const double d2 = s[i + 2] - 2.0 * s[i + 1] + s[i];
      if (d2 < -kCrfFlatTolerance) ++c.negative;
      if (d2 > kCrfFlatTolerance) ++positive;
      ++c.differences;
    }
    c.negative_fraction = static_cast<double>(c.negative) / static_cast<double>(c.differences);
    if (c.negative == 0 && positive == 0) {
      c.shape = "linear";
    } else if (positive == 0) {
      c.shape = "concave";
    } else if (c.negative == 0) {
      c.shape = "convex";
    } else {
      c.shape = "mixed";
    }
    stats.differences += c.differences;
    stats.negative += c.negative;
    stats.per_curve.push_back(std::move(c));
  }
  stats.curves = records.size();
  stats.negative_fraction = static_cast<double>(stats.negative) / static_cast<double>(stats.differences);
  return stats;
}

std::vector<CrfRecord> synthetic_concave_crfs(std::size_t samples) {
  if (samples < 3) throw ConfigError("synthetic CRFs need at least 3 samples");
  std::vector<CrfRecord> out;
  auto add = [&](const std::string& name, auto&& f) {
    CrfRecord r{name, std::vector<double>(samples)};
    for (std::size_t i = 0; i < samples; ++i) r.samples[i] = f(static_cast<double>(i) / static_cast<double>(samples - 1));
    out.push_back(std::move(r));
  };
  for (double g : {0.25, 0.4, 0.45, 0.6, 0.8}) {
    char name[32];
    std::snprintf(name, sizeof(name), "power-%.2f", g);
    add(name, [g](double x) { return std::pow(x, g); });
  }
  for (double k : {3.0, 10.0, 50.0}) {
    char name[32];
    std::snprintf(name, sizeof(name), "log-%g", k);
    add(name, [k](double x) { return std::log1p(k * x) / std::log1p(k); });
  }
  for (double k : {2.0, 5.0}) {
    char name[32];
    std::snprintf(name, sizeof(name), "exp-%g", k);
    add(name, [k](double x) { return (1.0 - std::exp(-k * x)) / (1.0 - std::exp(-k)); });
  }
  return out;
}

}  // namespace sacc
