#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cephlm/cli/commands.hpp"
#include "cephlm/error.hpp"

namespace fs = std::filesystem;
using namespace cephlm;
using namespace cephlm::cli;

int main(int argc, char** argv) {
  CLI::App app{"Cephalometric landmark detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> precision;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "TOML run configuration");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--precision", precision, "Floating point precision")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--set", overrides, "Config override key.path=value (repeatable)");

  std::size_t n_cases = 0;
  bool n_given = false;
  fs::path out_dir, cases_dir, dataset_dir, pc_dir, pe_dir, estimates_dir, evaluation;
  std::vector<std::string> landmarks;
  std::vector<fs::path> images;
  bool overlay = false;
  std::size_t kfold = 0;
  std::optional<double> alpha;
  std::string format;

  auto* synth = app.add_subcommand("synth", "Generate synthetic cases and observer scattergrams");
  synth->add_option("-n,--cases", n_cases, "Number of cases (default from config)")
      ->each([&](const std::string&) { n_given = true; });
  synth->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* build = app.add_subcommand("build-dataset", "Sample training patches from annotated cases");
  build->add_option("--cases", cases_dir, "Case directory with cases.json")->required();
  build->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* train_pc = app.add_subcommand("train-pc", "Train the patch classifier");
  train_pc->add_option("--dataset", dataset_dir, "build-dataset output")->required();
  train_pc->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* train_pe = app.add_subcommand("train-pe", "Train the point estimators");
  train_pe->add_option("--dataset", dataset_dir, "build-dataset output")->required();
  train_pe->add_option("-o,--out", out_dir, "Output directory")->required();
  train_pe->add_option("--landmark", landmarks, "Landmark to train (repeatable, default all)");

  auto* landmark = app.add_subcommand("landmark", "Locate landmarks with trained models");
  landmark->add_option("--pc", pc_dir, "train-pc output")->required();
  landmark->add_option("--pe", pe_dir, "train-pe output")->required();
  landmark->add_option("--dataset", dataset_dir, "build-dataset output, for the soft-tissue filter");
  landmark->add_option("--cases", cases_dir, "Case directory with cases.json");
  landmark->add_option("--image", images, "Input image (repeatable)");
  landmark->add_option("-o,--out", out_dir, "Output directory")->required();
  landmark->add_flag("--overlay", overlay, "Also write <id>_overlay.png");

  auto* evaluate = app.add_subcommand("evaluate", "Score estimates against ground truth");
  evaluate->add_option("--cases", cases_dir, "Case directory with cases.json and observers.json")->required();
  evaluate->add_option("--kfold", kfold, "Train and test k folds end to end");
  evaluate->add_option("--estimates", estimates_dir, "landmark output to score");
  evaluate->add_option("--alpha", alpha, "Ellipse confidence limit");
  evaluate->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Render a stored evaluation");
  report->add_option("evaluation", evaluation, "evaluation.json")->required();
  report->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
  report->add_option("--alpha", alpha, "Ellipse confidence limit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    if (jobs) overrides.push_back("jobs=" + std::to_string(*jobs));
    if (precision) overrides.push_back("precision=\"" + *precision + "\"");
    if (!format.empty()) overrides.push_back("eval.format=\"" + format + "\"");
    const fs::path cfg_file = config_path;
    RunConfig cfg = resolve_config(config_path.empty() ? nullptr : &cfg_file, overrides);
    if (alpha && app.got_subcommand(evaluate)) {
      cfg.alpha = *alpha;
      cfg.validate();
    }

    if (app.got_subcommand(synth)) {
      cmd_synth(cfg, n_given ? n_cases : cfg.n_cases, out_dir, std::cerr);
    } else if (app.got_subcommand(build)) {
      cmd_build_dataset(cfg, cases_dir, out_dir, std::cerr);
    } else if (app.got_subcommand(train_pc)) {
      cmd_train_pc(cfg, dataset_dir, out_dir, std::cerr);
    } else if (app.got_subcommand(train_pe)) {
      cmd_train_pe(cfg, dataset_dir, out_dir, landmarks, std::cerr);
    } else if (app.got_subcommand(landmark)) {
      LandmarkArgs a{pc_dir, pe_dir, std::nullopt, std::nullopt, images, out_dir, overlay};
      if (!dataset_dir.empty()) a.dataset_dir = dataset_dir;
      if (!cases_dir.empty()) a.cases_dir = cases_dir;
      cmd_landmark(cfg, a, std::cerr);
    } else if (app.got_subcommand(evaluate)) {
      EvaluateArgs a{cases_dir, kfold, std::nullopt, out_dir};
      if (!estimates_dir.empty()) a.estimates_dir = estimates_dir;
      cmd_evaluate(cfg, a, std::cout);
    } else if (app.got_subcommand(report)) {
      std::cout << cmd_report(evaluation, evalkit::parse_report_format(cfg.report_format), alpha);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
