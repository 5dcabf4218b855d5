#include "sacc/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "sacc/data/image_io.hpp"
#include "sacc/errors.hpp"

namespace fs = std::filesystem;

namespace sacc {

namespace {

struct Scene {
  double cx, cy, radius;         // object placement in pixels
  double bg_lo, bg_hi, bg_angle;  // linear background ramp
  double fg;                      // object brightness
  std::array<double, 3> tint;     // per-channel color of the whole scene
  double phase;                   // texture phase
};

// Coverage of class `label` at pixel centre (x, y): 1 inside the object's
// bright part, 0 elsewhere.
bool inside(std::int64_t label, const Scene& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy, r = s.radius;
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double period = std::max(4.0, r / 2.5);
  auto stripe = [&](double t) { return std::fmod(t + s.phase * period + 1000.0 * period, period) < period / 2; };
  const bool in_box = ax <= r && ay <= r;
  switch (label) {
    case 0:  // disk
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return ax <= 0.85 * r && ay <= 0.85 * r;
    case 2:  // upward triangle
      return dy <= 0.8 * r && dy >= -r && ax <= (dy + r) * 0.55;
    case 3: {  // ring
      const double d = std::sqrt(dx * dx + dy * dy);
      return d <= r && d >= 0.55 * r;
    }
    case 4:  // plus
      return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);
    case 5:  // horizontal bars
      return in_box && stripe(dy);
    case 6:  // vertical bars
      return in_box && stripe(dx);
    case 7:  // checkerboard
      return in_box && (stripe(dx) != stripe(dy));
    case 8:  // diagonal stripes
      return in_box && stripe((dx + dy) / std::numbers::sqrt2);
    case 9:  // X
      return ax <= r && ay <= r && std::abs(ax - ay) <= 0.3 * r;
    default:
      throw IndexError("unknown corpus class " + std::to_string(label));
  }
}

void render(ImageBatch& batch, std::size_t n, std::int64_t label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double side = static_cast<double>(batch.width);
  Scene s{};
  s.radius = side * (0.22 + 0.08 * u(rng));
  s.cx = side / 2 + side * 0.12 * (2 * u(rng) - 1);
  s.cy = side / 2 + side * 0.12 * (2 * u(rng) - 1);
  s.bg_lo = 0.05 + 0.20 * u(rng);
  s.bg_hi = 0.70 + 0.30 * u(rng);
  s.bg_angle = 2 * std::numbers::pi * u(rng);
  const double bg_mid = 0.5 * (s.bg_lo + s.bg_hi);
  s.fg = u(rng) < 0.5 ? std::min(1.0, bg_mid + 0.3 + 0.1 * u(rng)) : std::max(0.02, bg_mid - 0.3 - 0.1 * u(rng));
  for (double& t : s.tint) t = 0.8 + 0.2 * u(rng);
  s.phase = u(rng);

  const double ca = std::cos(s.bg_angle), sa = std::sin(s.bg_angle);
  for (std::size_t y = 0; y < batch.height; ++y) {
    for (std::size_t x = 0; x < batch.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      // Projection onto the ramp direction, mapped to [0,1] across the image diagonal.
      const double t = 0.5 + ((px - side / 2) * ca + (py - side / 2) * sa) / (side * std::numbers::sqrt2);
      double v = s.bg_lo + (s.bg_hi - s.bg_lo) * t;
      if (inside(label, s, px, py)) v = s.fg;
      for (std::size_t c = 0; c < batch.channels; ++c) batch.at(n, y, x, c) = std::clamp(v * s.tint[c], 0.0, 1.0);
    }
  }
}

ImageBatch render_split(const CorpusConfig& cfg, std::size_t count, std::uint64_t offset, const std::string& prefix,
                        std::vector<std::int64_t>& labels) {
  ImageBatch batch(count, cfg.side, cfg.side, 3, 256);
  labels.resize(count);
  // Balanced classes in a seeded order.
  std::vector<std::int64_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<std::int64_t>(i % DeskCorpus::kClasses);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xC1A55ULL + offset));
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  for (std::size_t i = 0; i < count; ++i) {
    labels[i] = order[i];
    render(batch, i, order[i], derive_seed(cfg.seed, offset + i));
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%05zu", prefix.c_str(), i);
    batch.ids[i] = id;
  }
  batch.quantize();
  return batch;
}

}  // namespace

void CorpusConfig::validate() const {
  if (train_count == 0 || test_count == 0) throw ConfigError("corpus splits must be non-empty");
  if (side < 48 || side % 3 != 0) throw ConfigError("corpus side must be a multiple of 3 and at least 48");
  degradation.validate();
}

const std::vector<std::string>& DeskCorpus::class_names() {
  static const std::vector<std::string> names{"disk",          "square",       "triangle",     "ring",
                                              "plus",          "h-bars",       "v-bars",       "checker",
                                              "diag-stripes",  "x-cross"};
  return names;
}

nlohmann::json DeskCorpus::manifest() const {
  nlohmann::json items = nlohmann::json::array();
  auto add = [&](const ImageBatch& normal, const std::vector<std::int64_t>& labels, const std::string& split) {
    for (std::size_t i = 0; i < normal.count; ++i) {
      items.push_back({{"id", normal.ids[i]},
                       {"split", split},
                       {"label", labels[i]},
                       {"normal", "normal/" + normal.ids[i] + ".ppm"},
                       {"dark", "dark/" + normal.ids[i] + ".ppm"}});
    }
  };
  add(normal_train, train_labels, "train");
  add(normal_test, test_labels, "test");
  return {{"schema_version", 1},
          {"seed", config.seed},
          {"side", config.side},
          {"train_count", config.train_count},
          {"test_count", config.test_count},
          {"classes", class_names()},
          {"degradation", config.degradation.to_json()},
          {"items", items}};
}

DeskCorpus build_desk_corpus(const CorpusConfig& config) {
  config.validate();
  DeskCorpus corpus;
  corpus.config = config;
  corpus.normal_train = render_split(config, config.train_count, 0, "train", corpus.train_labels);
  corpus.normal_test = render_split(config, config.test_count, config.train_count, "test", corpus.test_labels);
  corpus.dark_train = darken(corpus.normal_train, config.degradation, 0);
  corpus.dark_test = darken(corpus.normal_test, config.degradation, config.train_count);
  return corpus;
}

void write_desk_corpus(const fs::path& dir, const DeskCorpus& corpus) {
  fs::create_directories(dir / "normal");
  fs::create_directories(dir / "dark");
  auto write_split = [&](const ImageBatch& normal, const ImageBatch& dark) {
    for (std::size_t i = 0; i < normal.count; ++i) {
      write_image(dir / "normal" / (normal.ids[i] + ".ppm"), normal, i);
      write_image(dir / "dark" / (normal.ids[i] + ".ppm"), dark, i);
    }
  };
  write_split(corpus.normal_train, corpus.dark_train);
  write_split(corpus.normal_test, corpus.dark_test);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError((dir / "manifest.json").string() + ": cannot open for writing");
  out << corpus.manifest().dump(2) << "\n";
}

DeskCorpus load_desk_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError(manifest_path.string() + ": cannot open corpus manifest");
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
  DeskCorpus corpus;
  try {
    corpus.config.seed = m.at("seed").get<std::uint64_t>();
    corpus.config.side = m.at("side").get<std::size_t>();
    corpus.config.degradation = DegradationSpec::from_json(m.at("degradation"));
    std::vector<ImageBatch> parts[4];
    for (const auto& item : m.at("items")) {
      const bool train = item.at("split").get<std::string>() == "train";
      parts[train ? 0 : 1].push_back(read_image(dir / item.at("normal").get<std::string>()));
      parts[train ? 2 : 3].push_back(read_image(dir / item.at("dark").get<std::string>()));
      (train ? corpus.train_labels : corpus.test_labels).push_back(item.at("label").get<std::int64_t>());
    }
    if (parts[0].empty() || parts[1].empty()) throw InputError(manifest_path.string() + ": a split is empty");
    corpus.normal_train = ImageBatch::concat(parts[0]);
    corpus.normal_test = ImageBatch::concat(parts[1]);
    corpus.dark_train = ImageBatch::concat(parts[2]);
    corpus.dark_test = ImageBatch::concat(parts[3]);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(manifest_path.string() + ": " + e.what());
  }
  corpus.config.train_count = corpus.normal_train.count;
  corpus.config.test_count = corpus.normal_test.count;
  return corpus;
}

}  // namespace sacc
