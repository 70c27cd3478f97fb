// genview command line: offline view-generation pipeline (calibrate ->
// analyze -> perturb), pair scoring (score -> weights), and the synthetic
// trainer (train -> report).
//
// Exit codes: 0 success, 2 config error, 3 input format error, 4 numerical
// failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "genview/commands.hpp"
#include "genview/errors.hpp"

namespace {

genview::RunConfig load_config(const std::string& config_path,
                               const std::optional<std::uint64_t>& seed_override) {
  genview::RunConfig cfg = config_path.empty() ? genview::RunConfig()
                                               : genview::RunConfig::load(config_path);
  if (seed_override) cfg.set("seed", genview::format_u64(*seed_override));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GenView toolchain: adaptive positive-view construction and "
               "quality-driven contrastive training at desk scale"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "run configuration file (key = value)");
  app.add_option("--seed", seed_override, "override the config seed");

  std::string features, features_b, embeddings, analysis, calibration, scores, out;
  std::string meta_out, format = "markdown";
  std::vector<std::string> report_inputs;

  auto* calibrate = app.add_subcommand(
      "calibrate", "fit the global attention projector and foreground threshold");
  calibrate->add_option("--features", features, "feature-map container")->required();
  calibrate->add_option("--out", out, "calibration container to write")->required();

  auto* analyze = app.add_subcommand(
      "analyze", "per-sample foreground proportion and selected noise level");
  analyze->add_option("--features", features, "feature-map container")->required();
  analyze->add_option("--calibration", calibration, "calibration container")->required();
  analyze->add_option("--out", out, "analysis table to write (TSV)")->required();

  auto* perturb = app.add_subcommand(
      "perturb", "noise conditional embeddings and emit generator requests");
  perturb->add_option("--embeddings", embeddings, "embedding container")->required();
  perturb->add_option("--analysis", analysis, "analysis table from 'analyze'")->required();
  perturb->add_option("--out", out, "noised-embedding container to write")->required();
  perturb->add_option("--out-meta", meta_out, "request metadata sidecar (TSV)")->required();

  auto* score = app.add_subcommand("score", "pair-quality table for two view files");
  score->add_option("--features-a", features, "view-1 feature container")->required();
  score->add_option("--features-b", features_b, "view-2 feature container")->required();
  score->add_option("--calibration", calibration,
                    "calibration container (with quality.use_global_projector)");
  score->add_option("--out", out, "score table to write (TSV)")->required();

  auto* weights = app.add_subcommand("weights", "softmax re-weighting of a q table");
  weights->add_option("--scores", scores, "score table from 'score'")->required();
  weights->add_option("--out", out, "weight table to write (TSV)")->required();

  auto* train = app.add_subcommand("train", "run the synthetic contrastive trainer");
  train->add_option("--out", out, "experiment report to write")->required();

  auto* report = app.add_subcommand("report", "comparison table from report files");
  report->add_option("reports", report_inputs, "experiment report files")
      ->required()
      ->expected(-1);
  report->add_option("--format", format, "markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));
  report->add_option("--out", out, "table file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const genview::RunConfig cfg = load_config(config_path, seed_override);
    if (*calibrate) {
      genview::cmd_calibrate(features, cfg, out);
    } else if (*analyze) {
      genview::cmd_analyze(features, calibration, cfg, out);
    } else if (*perturb) {
      genview::cmd_perturb(embeddings, analysis, cfg, out, meta_out);
    } else if (*score) {
      std::optional<std::string> calib;
      if (!calibration.empty()) calib = calibration;
      genview::cmd_score(features, features_b, calib, cfg, out);
    } else if (*weights) {
      genview::cmd_weights(scores, out);
    } else if (*train) {
      const genview::ExperimentReport rep = genview::cmd_train(cfg, out);
      std::cout << "report written to " << out << "\n"
                << "probe accuracy " << genview::format_double(rep.probe_accuracy)
                << ", wall clock " << genview::format_double(rep.wall_clock_seconds)
                << " s\n";
    } else if (*report) {
      const genview::ReportFormat fmt = format == "csv"
                                            ? genview::ReportFormat::Csv
                                            : genview::ReportFormat::Markdown;
      genview::cmd_report(report_inputs, fmt, out);
    }
  } catch (const genview::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const genview::FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const genview::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
