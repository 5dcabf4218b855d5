#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstring>
#include <optional>
#include <string>

#include "sacc/app/commands.hpp"
#include "sacc/curve/curve.hpp"
#include "sacc/curve/integral_operator.hpp"
#include "sacc/data/crf.hpp"
#include "sacc/data/degradation.hpp"
#include "sacc/errors.hpp"
#include "sacc/pretext/jigsaw.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// nlohmann::json -> Python object through the json module; reports are small.
py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Array matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size(), c = rows.empty() ? 0 : rows.front().size();
  Array out({r, c});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
  return out;
}

// H×W×C or N×H×W×C array in [0,1] -> batch on the `levels` grid.
sacc::ImageBatch to_batch(const Array& a, std::size_t levels) {
  if (a.ndim() != 3 && a.ndim() != 4) throw sacc::DimensionError("images must be H×W×C or N×H×W×C");
  const bool single = a.ndim() == 3;
  const std::size_t n = single ? 1 : a.shape(0);
  const std::size_t off = single ? 0 : 1;
  sacc::ImageBatch b(n, a.shape(off), a.shape(off + 1), a.shape(off + 2), levels);
  std::memcpy(b.values.data(), a.data(), b.values.size() * sizeof(double));
  for (double v : b.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw sacc::InputError("image values must lie in [0,1]");
  }
  return b;
}

Array from_batch(const sacc::ImageBatch& b, bool single) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(b.height), static_cast<py::ssize_t>(b.width),
                                 static_cast<py::ssize_t>(b.channels)};
  if (!single) shape.insert(shape.begin(), static_cast<py::ssize_t>(b.count));
  Array out(shape);
  std::memcpy(out.mutable_data(), b.values.data(), b.values.size() * sizeof(double));
  return out;
}

sacc::ConcaveCurveSet to_curves(const Array& lut) {
  if (lut.ndim() != 2) throw sacc::DimensionError("curves must be a C×P array");
  sacc::ConcaveCurveSet c;
  c.levels = lut.shape(1);
  auto m = lut.unchecked<2>();
  for (py::ssize_t ch = 0; ch < lut.shape(0); ++ch) {
    std::vector<double> row(c.levels);
    for (std::size_t p = 0; p < c.levels; ++p) row[p] = m(ch, p);
    c.lut.push_back(std::move(row));
    c.degenerate.push_back(false);
  }
  return c;
}

sacc::RunConfig run_config(const py::object& config) {
  return config.is_none() ? sacc::RunConfig{} : sacc::RunConfig::from_json(from_python(config));
}

}  // namespace

PYBIND11_MODULE(_sacc, m) {
  m.doc() = "Concave-curve low-light enhancement (C++ core)";

  // Translators run most-recent first, so the base class goes first.
  const auto& base = py::register_exception<sacc::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<sacc::ConfigError>(m, "ConfigError", base);
  py::register_exception<sacc::InputError>(m, "InputError", base);
  py::register_exception<sacc::DimensionError>(m, "DimensionError", base);
  py::register_exception<sacc::ContractViolation>(m, "ContractViolation", base);
  py::register_exception<sacc::IoError>(m, "IoError", base);

  m.def(
      "integral_operator",
      [](std::size_t levels, int order) {
        const auto op = sacc::build_integral_operator(levels, order);
        Array out({op.levels(), op.coefficients()});
        std::memcpy(out.mutable_data(), op.matrix().data(), op.matrix().size() * sizeof(double));
        return out;
      },
      py::arg("levels") = 256, py::arg("order") = 2, "Merged integral matrix D of shape P × (P-1).");

  m.def(
      "build_curve",
      [](const Array& v, int order) {
        if (v.ndim() != 2) throw sacc::DimensionError("coefficients must be a C×(P-1) array");
        sacc::SecondDerivativePrediction pred;
        auto a = v.unchecked<2>();
        for (py::ssize_t c = 0; c < v.shape(0); ++c) {
          std::vector<double> row(static_cast<std::size_t>(v.shape(1)));
          for (py::ssize_t i = 0; i < v.shape(1); ++i) row[static_cast<std::size_t>(i)] = a(c, i);
          pred.channels.push_back(std::move(row));
        }
        const auto curves =
            sacc::build_curve(pred, sacc::build_integral_operator(static_cast<std::size_t>(v.shape(1)) + 1, order));
        return matrix(curves.lut);
      },
      py::arg("v"), py::arg("order") = 2, "Per-channel lookup tables from non-negative coefficients.");

  m.def(
      "curve_is_valid",
      [](const Array& lut, bool require_concave, double tol) {
        return sacc::curve_concavity_report(to_curves(lut)).valid(tol, require_concave);
      },
      py::arg("lut"), py::arg("require_concave") = true, py::arg("tol") = 1e-12);

  m.def(
      "apply_curve",
      [](const Array& image, const Array& lut, bool requantize) {
        const auto curves = to_curves(lut);
        const auto batch = to_batch(image, curves.levels);
        return from_batch(sacc::apply_curve(batch, curves, {requantize}), image.ndim() == 3);
      },
      py::arg("image"), py::arg("lut"), py::arg("requantize") = false,
      "Maps every value at level p of channel c to lut[c, p]; values are snapped to the level grid first.");

  m.def(
      "darken",
      [](const Array& images, double gamma, std::array<double, 3> bias, double sigma, std::uint64_t seed,
         std::size_t levels) {
        sacc::DegradationSpec spec;
        spec.gamma = gamma;
        spec.bias = bias;
        spec.noise_sigma = sigma;
        spec.seed = seed;
        return from_batch(sacc::darken(to_batch(images, levels), spec), images.ndim() == 3);
      },
      py::arg("images"), py::arg("gamma") = 4.0, py::arg("bias") = std::array<double, 3>{1.0, 1.0, 1.0},
      py::arg("sigma") = 0.01, py::arg("seed") = 0, py::arg("levels") = 256);

  m.def(
      "analyze_crf",
      [](const std::vector<std::vector<double>>& curves) {
        std::vector<sacc::CrfRecord> records;
        for (std::size_t i = 0; i < curves.size(); ++i) records.push_back({"curve" + std::to_string(i), curves[i]});
        return to_python(sacc::analyze_crf_dataset(records).to_json());
      },
      py::arg("curves"), "Negative second-difference statistics over response curves.");

  m.def(
      "analyze_crf_file",
      [](const std::string& path) { return to_python(sacc::analyze_crf_dataset(sacc::load_crf_file(path)).to_json()); },
      py::arg("path"));

  m.def(
      "synthetic_concave_crfs",
      [](std::size_t samples) {
        std::vector<std::vector<double>> out;
        for (const auto& r : sacc::synthetic_concave_crfs(samples)) out.push_back(r.samples);
        return out;
      },
      py::arg("samples") = 1024);

  m.def(
      "build_codebook", [](std::size_t k, std::uint64_t seed) { return to_python(sacc::build_codebook(k, seed).to_json()); },
      py::arg("k") = 100, py::arg("seed") = 17, "Max-min Hamming permutation codebook as its JSON document.");

  m.def(
      "make_puzzle",
      [](const Array& image, const py::object& codebook, std::size_t index, int angle) {
        const auto book = sacc::PermutationCodebook::from_json(from_python(codebook));
        return from_batch(sacc::make_puzzle(to_batch(image, 256), book, index, angle).image, true);
      },
      py::arg("image"), py::arg("codebook"), py::arg("index"), py::arg("angle") = 0);

  m.def(
      "default_config", [] { return to_python(sacc::RunConfig{}.to_json()); },
      "Default run configuration (the JSON accepted by the CLI's --config).");

  m.def(
      "resolve_config",
      [](const py::object& config) { return to_python(run_config(config).to_json()); }, py::arg("config"),
      "Overlays a partial config on the defaults; unknown keys raise ConfigError.");

  m.def(
      "generate_corpus",
      [](const std::string& out, const py::object& config, bool overwrite) {
        return to_python(sacc::cmd_generate_corpus({run_config(config), out, overwrite}));
      },
      py::arg("out"), py::arg("config") = py::none(), py::arg("overwrite") = false);

  m.def(
      "train",
      [](const std::string& out, const py::object& config, const std::optional<std::string>& corpus,
         const std::string& phase, const std::optional<std::string>& head, bool overwrite) {
        sacc::TrainOptions opts;
        opts.config = run_config(config);
        if (corpus) opts.corpus = *corpus;
        opts.generate_corpus = !corpus;
        opts.out = out;
        opts.phase = phase;
        if (head) opts.head = *head;
        opts.overwrite = overwrite;
        nlohmann::json report;
        {
          py::gil_scoped_release release;
          report = sacc::cmd_train(opts);
        }
        return to_python(report);
      },
      py::arg("out"), py::arg("config") = py::none(), py::arg("corpus") = py::none(), py::arg("phase") = "all",
      py::arg("head") = py::none(), py::arg("overwrite") = false,
      "Runs the training pipeline (rendering the corpus when none is given) and returns the report.");

  m.def(
      "enhance",
      [](const std::string& model, const std::string& input, const std::string& out, bool video, bool requantize,
         bool overwrite) {
        sacc::EnhanceOptions opts;
        opts.model = model;
        opts.input = input;
        opts.out = out;
        opts.video = video;
        opts.requantize = requantize;
        opts.overwrite = overwrite;
        return to_python(sacc::cmd_enhance(opts));
      },
      py::arg("model"), py::arg("input"), py::arg("out"), py::arg("video") = false, py::arg("requantize") = false,
      py::arg("overwrite") = false);

  m.def(
      "evaluate",
      [](const std::string& model, const std::optional<std::string>& corpus) {
        sacc::EvalOptions opts;
        opts.model = model;
        if (corpus) opts.corpus = *corpus;
        opts.generate_corpus = !corpus;
        return to_python(sacc::cmd_eval(opts));
      },
      py::arg("model"), py::arg("corpus") = py::none());

  m.def(
      "predict_curves",
      [](const std::string& model, const Array& images) {
        const auto loaded = sacc::load_model(model);
        const auto batch = to_batch(images, loaded.models->predictor.config().levels);
        py::list out;
        for (const auto& c : loaded.models->predictor.predict_curves(batch)) out.append(matrix(c.lut));
        return out;
      },
      py::arg("model"), py::arg("images"), "One C×P lookup table per image.");
}
