#include "sacc/app/commands.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sacc/curve/curve.hpp"
#include "sacc/curve/curve_io.hpp"
#include "sacc/data/crf.hpp"
#include "sacc/errors.hpp"
#include "sacc/tensor/checkpoint.hpp"

namespace sacc {

namespace fs = std::filesystem;

namespace {

std::string extension_for(ImageFormat format) {
  switch (format) {
    case ImageFormat::Png:
      return ".png";
    case ImageFormat::Ppm:
      return ".ppm";
    case ImageFormat::Auto:
      break;
  }
  throw ConfigError("an explicit output image format (ppm or png) is required");
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu", i);
  return buf;
}

// Writes `path` through a temp file and a rename so readers never see a
// half-written report.
void write_text_atomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

DeskCorpus acquire_corpus(const std::optional<fs::path>& dir, bool generate, const RunConfig& config) {
  if (dir && generate) throw ConfigError("pass either --corpus or --generate-corpus, not both");
  if (dir) return load_desk_corpus(*dir);
  if (generate) return build_desk_corpus(config.corpus.resolve(config.seed));
  throw ConfigError("no corpus: pass --corpus <dir> or --generate-corpus");
}

nlohmann::json corpus_summary(const DeskCorpus& corpus, const std::string& source) {
  return {{"source", source},
          {"seed", corpus.config.seed},
          {"train_count", corpus.normal_train.count},
          {"test_count", corpus.normal_test.count},
          {"side", corpus.config.side},
          {"degradation", corpus.config.degradation.to_json()}};
}

void require_depth(const ImageBatch& images, const ModelSet& models) {
  const std::size_t levels = models.predictor.config().levels;
  if (images.levels != levels) {
    throw InputError("input bit depth has " + std::to_string(images.levels) + " levels but the model expects " +
                     std::to_string(levels));
  }
  if (images.channels != models.predictor.config().channels) {
    throw InputError("input has " + std::to_string(images.channels) + " channels but the model expects " +
                     std::to_string(models.predictor.config().channels));
  }
}

nlohmann::json curve_summary(const ConcaveCurveSet& curves, int order) {
  const auto report = curve_concavity_report(curves);
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& ch : report.channels) {
    channels.push_back({{"min_first_difference", ch.min_first_difference},
                        {"max_second_difference", ch.max_second_difference},
                        {"first", ch.first_value},
                        {"last", ch.last_value},
                        {"degenerate", ch.degenerate}});
  }
  return {{"valid", report.valid(1e-12, order >= 2)}, {"channels", channels}};
}

}  // namespace

// ------------------------------------------------------------ staged output

StagedOutput::StagedOutput(fs::path target, bool overwrite) : target_(std::move(target)), overwrite_(overwrite) {
  if (target_.empty()) throw ConfigError("an output directory is required");
  if (fs::exists(target_) && !overwrite_) {
    throw ConfigError(target_.string() + " already exists (pass --overwrite to replace it)");
  }
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  fs::create_directories(parent);
  staging_ = parent / ("." + target_.filename().string() + ".partial");
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagedOutput::~StagedOutput() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedOutput::commit() {
  if (committed_) throw StateError("output already committed");
  if (fs::exists(target_)) {
    if (!overwrite_) throw ConfigError(target_.string() + " appeared while the run was in progress");
    fs::remove_all(target_);
  }
  fs::rename(staging_, target_);
  committed_ = true;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path.string() + ": write failed");
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InputError(path.string() + ": not valid JSON");
  return j;
}

// ------------------------------------------------------------ model folders

void save_model(const fs::path& dir, const RunConfig& config, const ModelSet& models, const std::string& checkpoint) {
  fs::create_directories(dir);
  write_json(dir / "config.json", config.to_json());
  write_json(dir / "codebook.json", models.codebook.to_json());
  save_checkpoint(dir / checkpoint, models.store);
}

LoadedModel load_model(const fs::path& dir, const std::string& checkpoint) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + ": not a model directory");
  if (!fs::exists(dir / checkpoint)) throw ConfigError((dir / checkpoint).string() + ": checkpoint not found");
  LoadedModel out;
  out.config = RunConfig::from_json(read_json(dir / "config.json"));
  out.models = std::make_unique<ModelSet>(out.config.train_config());
  const auto stored = PermutationCodebook::from_json(read_json(dir / "codebook.json"));
  if (stored.permutations != out.models->codebook.permutations) {
    throw ConfigError((dir / "codebook.json").string() + ": codebook does not match the model configuration");
  }
  restore_checkpoint(dir / checkpoint, out.models->store);
  out.models->freeze_all();
  return out;
}

// ----------------------------------------------------------------- commands

nlohmann::json cmd_generate_corpus(const GenerateCorpusOptions& opts) {
  const std::size_t threads = configured_threads();
  const CorpusConfig cc = opts.config.corpus.resolve(opts.config.seed);
  StagedOutput out(opts.out, opts.overwrite);
  const DeskCorpus corpus = build_desk_corpus(cc);
  write_desk_corpus(out.path(), corpus);
  nlohmann::json report = {{"schema_version", kSchemaVersion},
                           {"command", "generate-corpus"},
                           {"config", opts.config.to_json()},
                           {"threads", threads},
                           {"corpus", corpus_summary(corpus, "generated")}};
  write_json(out.path() / "generate_report.json", report);
  out.commit();
  return report;
}

nlohmann::json cmd_train(const TrainOptions& opts) {
  if (opts.phase != "all" && opts.phase != "n" && opts.phase != "l") {
    throw ConfigError("--phase must be all, n or l (got '" + opts.phase + "')");
  }
  if (opts.phase == "l" && !opts.head) {
    throw ConfigError("--phase l needs --head <model directory of a phase-n run>");
  }
  const std::size_t threads = configured_threads();
  const TrainConfig train = opts.config.train_config();
  train.validate();
  const DeskCorpus corpus = acquire_corpus(opts.corpus, opts.generate_corpus, opts.config);

  ModelSet models(train);
  PipelineStage first = PipelineStage::PhaseN;
  if (opts.phase == "l") {
    if (!fs::exists(*opts.head / kModelCheckpoint)) {
      throw ConfigError(opts.head->string() + ": no phase-N head checkpoint (" + kModelCheckpoint + ") found");
    }
    const auto stored = PermutationCodebook::from_json(read_json(*opts.head / "codebook.json"));
    if (stored.permutations != models.codebook.permutations) {
      throw ConfigError(opts.head->string() + ": head was trained with a different codebook");
    }
    restore_checkpoint(*opts.head / kModelCheckpoint, models.store);
    models.freeze_all();
    first = PipelineStage::PhaseL;
  }
  const PipelineStage last = opts.phase == "n" ? PipelineStage::PhaseN : PipelineStage::SaccPlus;

  StagedOutput out(opts.out, opts.overwrite);
  std::ofstream metrics(out.path() / "metrics.jsonl");
  if (!metrics) throw IoError((out.path() / "metrics.jsonl").string() + ": cannot open for writing");
  MetricsLog log(&metrics);
  auto on_stage = [&](const ModelSet& m, PipelineStage stage) {
    if (stage == PipelineStage::PhaseL) save_model(out.path(), opts.config, m, kSaccCheckpoint);
    if (opts.on_stage_end) opts.on_stage_end(stage);
  };
  nlohmann::json report = run_pipeline(models, corpus, train, log, last, first, on_stage).report;
  report["command"] = "train";
  report["phase"] = opts.phase;
  report["threads"] = threads;
  report["run_config"] = opts.config.to_json();
  report["corpus"]["source"] = opts.corpus ? "directory" : "generated";
  metrics.close();
  save_model(out.path(), opts.config, models);
  write_json(out.path() / "report.json", report);
  out.commit();
  return report;
}

nlohmann::json cmd_enhance(const EnhanceOptions& opts) {
  const std::size_t threads = configured_threads();
  const std::string ext = extension_for(opts.format);
  const LoadedModel model = load_model(opts.model);
  const ModelSet& m = *model.models;
  const int order = m.predictor.config().order;
  const ApplyOptions apply{opts.requantize};

  nlohmann::json items = nlohmann::json::array();
  std::size_t valid = 0, count = 0;
  StagedOutput out(opts.out, opts.overwrite);
  if (opts.video) {
    const VideoClip clip = load_video(opts.input);
    require_depth(clip.frames, m);
    // One curve per clip: the frame-averaged prediction (non-negative, so valid).
    const auto per_frame = m.predictor.predict_second_derivative(clip.frames);
    SecondDerivativePrediction mean = per_frame.front();
    for (auto& ch : mean.channels) std::fill(ch.begin(), ch.end(), 0.0);
    for (const auto& v : per_frame) {
      for (std::size_t c = 0; c < v.channels.size(); ++c) {
        for (std::size_t i = 0; i < v.channels[c].size(); ++i) {
          mean.channels[c][i] += v.channels[c][i] / static_cast<double>(per_frame.size());
        }
      }
    }
    const ConcaveCurveSet curve = build_curve(mean, m.predictor.integral_operator());
    const EnhancedClip enhanced = apply_curve_video(clip, curve, apply);
    for (std::size_t i = 0; i < enhanced.clip.length(); ++i) {
      const std::string name = frame_name(i);
      write_image(out.path() / (name + ext), enhanced.clip.frames, i, opts.format);
      write_curve_csv(out.path() / (name + "_curve.csv"), enhanced.frame_curves[i]);
      const auto summary = curve_summary(enhanced.frame_curves[i], order);
      valid += summary["valid"].get<bool>();
      items.push_back({{"id", clip.frames.ids.at(i)}, {"output", name + ext}, {"curve", name + "_curve.csv"}});
    }
    count = enhanced.clip.length();
  } else {
    const ImageBatch images = load_images(opts.input);
    require_depth(images, m);
    const auto curves = m.predictor.predict_curves(images);
    const ImageBatch enhanced = apply_curves(images, curves, apply);
    for (std::size_t i = 0; i < images.count; ++i) {
      const std::string& id = images.ids.at(i);
      write_image(out.path() / (id + ext), enhanced, i, opts.format);
      write_curve_csv(out.path() / (id + "_curve.csv"), curves[i]);
      const auto summary = curve_summary(curves[i], order);
      valid += summary["valid"].get<bool>();
      items.push_back({{"id", id},
                       {"output", id + ext},
                       {"curve", id + "_curve.csv"},
                       {"valid", summary["valid"]},
                       {"mean_in", images.image(i).mean()},
                       {"mean_out", enhanced.image(i).mean()}});
    }
    count = images.count;
  }
  nlohmann::json report = {{"schema_version", kSchemaVersion},
                           {"command", "enhance"},
                           {"config", model.config.to_json()},
                           {"threads", threads},
                           {"video", opts.video},
                           {"requantize", opts.requantize},
                           {"count", count},
                           {"valid_curves", valid},
                           {"items", items}};
  write_json(out.path() / "enhance_report.json", report);
  out.commit();
  return report;
}

nlohmann::json cmd_eval(const EvalOptions& opts) {
  const std::size_t threads = configured_threads();
  const bool has_sacc = fs::exists(opts.model / kSaccCheckpoint);
  // Baseline and SACC use the classifier as it was before fine-tuning.
  const LoadedModel sacc = load_model(opts.model, has_sacc ? kSaccCheckpoint : kModelCheckpoint);
  const DeskCorpus corpus = acquire_corpus(opts.corpus, opts.generate_corpus, sacc.config);
  const ModelSet& m = *sacc.models;
  require_depth(corpus.dark_test, m);

  const double normal_acc = evaluate_classifier(m, corpus.normal_test, corpus.test_labels);
  const double baseline = evaluate_classifier(m, corpus.dark_test, corpus.test_labels);
  const ImageBatch identity = apply_curves(
      corpus.dark_test, std::vector<ConcaveCurveSet>(corpus.dark_test.count,
                                                     ConcaveCurveSet::identity(corpus.dark_test.levels, corpus.dark_test.channels)));
  const double identity_acc = evaluate_classifier(m, identity, corpus.test_labels);
  const GammaBaseline gamma{std::vector<double>(corpus.dark_test.channels, 1.0 / corpus.config.degradation.gamma)};
  const double gamma_acc = evaluate_classifier(m, apply_gamma(corpus.dark_test, gamma), corpus.test_labels);
  const EnhancedBatch enhanced = enhance(m, corpus.dark_test);
  const double sacc_acc = evaluate_classifier(m, enhanced.images, corpus.test_labels);

  nlohmann::json sacc_plus = nullptr;
  if (has_sacc) {
    const LoadedModel final_model = load_model(opts.model, kModelCheckpoint);
    sacc_plus = evaluate_classifier(*final_model.models, enhance(*final_model.models, corpus.dark_test).images,
                                    corpus.test_labels);
  }
  std::size_t valid = 0;
  for (const auto& c : enhanced.curves) {
    valid += curve_concavity_report(c).valid(1e-12, m.predictor.config().order >= 2);
  }

  nlohmann::json report = {
      {"schema_version", kSchemaVersion},
      {"command", "eval"},
      {"config", sacc.config.to_json()},
      {"threads", threads},
      {"corpus", corpus_summary(corpus, opts.corpus ? "directory" : "generated")},
      {"accuracy",
       {{"normal", normal_acc},
        {"baseline_dark", baseline},
        {"identity_enhanced", identity_acc},
        {"gamma_corrected", gamma_acc},
        {"sacc", sacc_acc},
        {"sacc_plus", sacc_plus}}},
      {"brightness",
       {{"dark", corpus.dark_test.mean()}, {"enhanced", enhanced.images.mean()}, {"normal", corpus.normal_test.mean()}}},
      {"valid_curves", valid},
      {"curve_count", enhanced.curves.size()},
      {"curve_shape_vs_analytic_inverse",
       compare_curve_shape(enhanced.curves,
                           analytic_inverse_curve(corpus.config.degradation, m.predictor.config().levels))
           .to_json()}};
  if (opts.out) write_text_atomically(*opts.out, report.dump(2) + "\n");
  return report;
}

nlohmann::json cmd_analyze_crf(const AnalyzeCrfOptions& opts) {
  const std::size_t threads = configured_threads();
  if (opts.input && opts.synthetic) throw ConfigError("pass either --input or --synthetic, not both");
  if (!opts.input && !opts.synthetic) throw ConfigError("no CRF data: pass --input <file> or --synthetic");
  const auto records = opts.input ? load_crf_file(*opts.input) : synthetic_concave_crfs();
  const CrfStatistics stats = analyze_crf_dataset(records);
  nlohmann::json report = {{"schema_version", kSchemaVersion},
                           {"command", "analyze-crf"},
                           {"config",
                            {{"source", opts.input ? "file" : "synthetic"},
                             {"input", opts.input ? opts.input->filename().string() : ""},
                             {"flat_tolerance", kCrfFlatTolerance}}},
                           {"threads", threads},
                           {"statistics", stats.to_json()}};
  if (opts.out) write_text_atomically(*opts.out, report.dump(2) + "\n");
  return report;
}

nlohmann::json cmd_export_curve(const ExportCurveOptions& opts) {
  const std::size_t threads = configured_threads();
  if (opts.out.empty()) throw ConfigError("an output CSV path is required");
  const LoadedModel model = load_model(opts.model, opts.checkpoint);
  const ImageBatch image = read_image(opts.image);
  require_depth(image, *model.models);
  const ConcaveCurveSet curve = model.models->predictor.predict_curves(image).front();
  std::ostringstream csv;
  write_curve_csv(csv, curve);
  write_text_atomically(opts.out, csv.str());
  return {{"schema_version", kSchemaVersion},
          {"command", "export-curve"},
          {"config", model.config.to_json()},
          {"threads", threads},
          {"image", image.ids.empty() ? "" : image.ids.front()},
          {"checkpoint", opts.checkpoint},
          {"curve", curve_summary(curve, model.models->predictor.config().order)}};
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const ContractViolation*>(&e)) return 4;
  if (dynamic_cast<const Error*>(&e)) return 5;
  return 1;
}

}  // namespace sacc
