// sacc: command-line front end for concave-curve low-light enhancement.
//
//   sacc generate-corpus --seed 7 --out corpus/
//   sacc train --generate-corpus --seed 7 --out run/
//   sacc train --corpus corpus/ --phase n --out head/
//   sacc train --corpus corpus/ --phase l --head head/ --out run/
//   sacc enhance --model run/ --input photos/ --out enhanced/
//   sacc eval --model run/ --corpus corpus/
//   sacc analyze-crf --synthetic
//   sacc export-curve --model run/ --image probe.ppm --out curve.csv

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sacc/app/commands.hpp"

namespace {

struct ConfigArgs {
  std::optional<std::string> file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON run configuration (overlaid on the defaults)")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Override a config value: dotted.key=value (repeatable)");
    cmd->add_option("--seed", seed, "Master seed for corpus, noise and training");
  }
  sacc::RunConfig resolve() const {
    std::optional<std::filesystem::path> path;
    if (file) path = *file;
    return sacc::resolve_run_config(path, overrides, seed);
  }
};

void print(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

nlohmann::json brief_train_report(const nlohmann::json& report) {
  nlohmann::json brief = report;
  for (const char* phase : {"classifier", "phaseN", "phaseL", "finetune"}) {
    if (brief.contains(phase)) brief[phase].erase("loss_series");
  }
  brief.erase("run_config");
  return brief;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-aligned concave-curve low-light enhancement"};
  app.require_subcommand(1);

  // generate-corpus
  ConfigArgs gen_cfg;
  std::string gen_out;
  bool gen_overwrite = false;
  auto* gen = app.add_subcommand("generate-corpus", "Render the synthetic normal/dark desk corpus");
  gen_cfg.add_to(gen);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--overwrite", gen_overwrite, "Replace an existing output directory");

  // train
  ConfigArgs train_cfg;
  std::optional<std::string> train_corpus, train_head;
  std::string train_out, train_phase = "all";
  bool train_generate = false, train_overwrite = false;
  auto* train = app.add_subcommand("train", "Classifier, phase N, phase L and SACC+ fine-tuning");
  train_cfg.add_to(train);
  train->add_option("--corpus", train_corpus, "Corpus directory written by generate-corpus");
  train->add_flag("--generate-corpus", train_generate, "Render the corpus from the config instead");
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--phase", train_phase, "all, n (through phase N) or l (from a phase-N head)")
      ->check(CLI::IsMember({"all", "n", "l"}));
  train->add_option("--head", train_head, "Model directory of a phase-N run (required by --phase l)");
  train->add_flag("--overwrite", train_overwrite, "Replace an existing output directory");

  // enhance
  std::string enh_model, enh_input, enh_out, enh_format = "ppm";
  bool enh_video = false, enh_requantize = false, enh_overwrite = false;
  auto* enh = app.add_subcommand("enhance", "Enhance images (or one video clip) with a trained predictor");
  enh->add_option("--model", enh_model, "Model directory written by train")->required();
  enh->add_option("--input", enh_input, "Image file or directory")->required();
  enh->add_option("--out", enh_out, "Output directory")->required();
  enh->add_flag("--video", enh_video, "Treat the input directory as the frames of one clip (one shared curve)");
  enh->add_flag("--requantize", enh_requantize, "Snap outputs to the input bit depth grid");
  enh->add_option("--format", enh_format, "Output image format")->check(CLI::IsMember({"ppm", "png"}));
  enh->add_flag("--overwrite", enh_overwrite, "Replace an existing output directory");

  // eval
  std::string eval_model;
  std::optional<std::string> eval_corpus, eval_out;
  bool eval_generate = false;
  auto* ev = app.add_subcommand("eval", "Baseline / SACC / SACC+ accuracy on the darkened test split");
  ev->add_option("--model", eval_model, "Model directory written by train")->required();
  ev->add_option("--corpus", eval_corpus, "Corpus directory written by generate-corpus");
  ev->add_flag("--generate-corpus", eval_generate, "Render the corpus from the model's config");
  ev->add_option("--out", eval_out, "Also write the report to this file");

  // analyze-crf
  std::optional<std::string> crf_input, crf_out;
  bool crf_synthetic = false;
  auto* crf = app.add_subcommand("analyze-crf", "Fraction of negative second differences over response curves");
  crf->add_option("--input", crf_input, "DoRF-style or plain curve file")->check(CLI::ExistingFile);
  crf->add_flag("--synthetic", crf_synthetic, "Use the bundled synthetic concave set");
  crf->add_option("--out", crf_out, "Also write the report to this file");

  // export-curve
  std::string exp_model, exp_image, exp_out, exp_ckpt = sacc::kModelCheckpoint;
  auto* exp = app.add_subcommand("export-curve", "Write the predicted curve of one probe image as CSV");
  exp->add_option("--model", exp_model, "Model directory written by train")->required();
  exp->add_option("--image", exp_image, "Probe image")->required();
  exp->add_option("--out", exp_out, "Output CSV file")->required();
  exp->add_option("--checkpoint", exp_ckpt, "Checkpoint file inside the model directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      print(sacc::cmd_generate_corpus({gen_cfg.resolve(), gen_out, gen_overwrite}));
    } else if (*train) {
      sacc::TrainOptions opts;
      opts.config = train_cfg.resolve();
      if (train_corpus) opts.corpus = *train_corpus;
      opts.generate_corpus = train_generate;
      opts.out = train_out;
      opts.phase = train_phase;
      if (train_head) opts.head = *train_head;
      opts.overwrite = train_overwrite;
      print(brief_train_report(sacc::cmd_train(opts)));
    } else if (*enh) {
      sacc::EnhanceOptions opts;
      opts.model = enh_model;
      opts.input = enh_input;
      opts.out = enh_out;
      opts.video = enh_video;
      opts.requantize = enh_requantize;
      opts.format = sacc::parse_image_format(enh_format);
      opts.overwrite = enh_overwrite;
      const auto report = sacc::cmd_enhance(opts);
      std::cout << "enhanced " << report["count"] << " image(s), " << report["valid_curves"]
                << " valid curve(s) -> " << enh_out << std::endl;
    } else if (*ev) {
      sacc::EvalOptions opts;
      opts.model = eval_model;
      if (eval_corpus) opts.corpus = *eval_corpus;
      opts.generate_corpus = eval_generate;
      if (eval_out) opts.out = *eval_out;
      print(sacc::cmd_eval(opts));
    } else if (*crf) {
      sacc::AnalyzeCrfOptions opts;
      if (crf_input) opts.input = *crf_input;
      opts.synthetic = crf_synthetic;
      if (crf_out) opts.out = *crf_out;
      const auto report = sacc::cmd_analyze_crf(opts);
      nlohmann::json brief = report;
      brief["statistics"].erase("per_curve");
      print(brief);
    } else if (*exp) {
      print(sacc::cmd_export_curve({exp_model, exp_image, exp_out, exp_ckpt}));
    }
  } catch (const std::exception& e) {
    std::cerr << "sacc: error: " << e.what() << std::endl;
    return sacc::exit_code_for(e);
  }
  return 0;
}
