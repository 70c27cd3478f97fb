#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "genview/adaptive.hpp"
#include "genview/config.hpp"
#include "genview/container.hpp"
#include "genview/errors.hpp"
#include "genview/rng.hpp"
#include "genview/table.hpp"
#include "genview/trainer.hpp"

namespace genview {

inline NoisePolicy noise_policy_from(const RunConfig& cfg) {
  NoisePolicy policy;
  const std::string& s = cfg.get_string("adaptive.strategy");
  if (s == "constant") {
    policy.strategy = SelectionStrategy::Constant;
  } else if (s == "random") {
    policy.strategy = SelectionStrategy::Random;
  } else if (s == "adaptive") {
    policy.strategy = SelectionStrategy::Adaptive;
  } else {
    throw ConfigError("adaptive.strategy must be constant, random, or adaptive, got '" +
                      s + "'");
  }
  policy.constant_level = static_cast<int>(cfg.get_int("adaptive.constant_level"));
  return policy;
}

inline LossFamily loss_family_from(const RunConfig& cfg) {
  const std::string& s = cfg.get_string("loss.family");
  if (s == "nce") return LossFamily::InfoNce;
  if (s == "cos") return LossFamily::NegCosine;
  if (s == "kl") return LossFamily::SwavKl;
  throw ConfigError("loss.family must be nce, cos, or kl, got '" + s + "'");
}

inline NoiseSchedule schedule_from(const RunConfig& cfg) {
  return build_noise_schedule(static_cast<int>(cfg.get_int("schedule.num_steps")),
                              cfg.get_double("schedule.beta_start"),
                              cfg.get_double("schedule.beta_end"));
}

inline TrainerConfig trainer_config_from(const RunConfig& cfg) {
  TrainerConfig tc;
  tc.data.classes = static_cast<int>(cfg.get_int("trainer.classes"));
  tc.data.samples_per_class = static_cast<int>(cfg.get_int("trainer.samples_per_class"));
  tc.data.height = static_cast<int>(cfg.get_int("trainer.height"));
  tc.data.width = static_cast<int>(cfg.get_int("trainer.width"));
  tc.data.channels = static_cast<int>(cfg.get_int("trainer.channels"));
  tc.data.environments = static_cast<int>(cfg.get_int("trainer.environments"));
  tc.data.common_signal = cfg.get_double("trainer.common_signal");
  tc.data.class_signal = cfg.get_double("trainer.class_signal");
  tc.data.feature_noise_sigma = cfg.get_double("trainer.feature_noise_sigma");
  tc.data.background_sigma = cfg.get_double("trainer.background_sigma");
  tc.data.blob_min_fraction = cfg.get_double("trainer.blob_min_fraction");
  tc.data.blob_max_fraction = cfg.get_double("trainer.blob_max_fraction");

  tc.augment.crop_min_fraction = cfg.get_double("trainer.crop_min_fraction");
  tc.augment.crop_max_fraction = cfg.get_double("trainer.crop_max_fraction");
  tc.augment.additive_noise_sigma = cfg.get_double("trainer.aug_noise_sigma");
  tc.augment.drift_kappa = cfg.get_double("trainer.drift_kappa");
  tc.augment.apply_probability = cfg.get_double("trainer.alpha");

  tc.feature_dim = static_cast<int>(cfg.get_int("trainer.feature_dim"));
  tc.projection_dim = static_cast<int>(cfg.get_int("trainer.projection_dim"));
  tc.encoder_init_scale = cfg.get_double("trainer.encoder_init_scale");

  tc.loss.family = loss_family_from(cfg);
  tc.loss.tau = cfg.get_double("loss.tau");
  tc.loss.sinkhorn_epsilon = cfg.get_double("loss.sinkhorn_epsilon");
  tc.loss.sinkhorn_iterations = static_cast<int>(cfg.get_int("loss.sinkhorn_iterations"));
  tc.loss.prototype_temperature = cfg.get_double("loss.prototype_temperature");

  tc.weighting = cfg.get_bool("quality.enabled") ? WeightingMode::Quality
                                                 : WeightingMode::Uniform;
  tc.quality_use_global_projector = cfg.get_bool("quality.use_global_projector");
  tc.strategy = noise_policy_from(cfg);
  tc.target_fraction = cfg.get_double("adaptive.target_fraction");

  tc.epochs = static_cast<int>(cfg.get_int("trainer.epochs"));
  tc.batch_size = static_cast<int>(cfg.get_int("trainer.batch_size"));
  tc.learning_rate = cfg.get_double("trainer.learning_rate");
  tc.probe_holdout = cfg.get_double("trainer.probe_holdout");
  tc.probe_learning_rate = cfg.get_double("trainer.probe_learning_rate");
  tc.probe_max_epochs = static_cast<int>(cfg.get_int("trainer.probe_max_epochs"));
  tc.probe_tolerance = cfg.get_double("trainer.probe_tolerance");
  tc.seed = cfg.get_u64("seed");
  return tc;
}

namespace detail {

inline std::vector<std::pair<std::string, FeatureMap>> feature_maps_of(
    const std::string& path) {
  std::vector<std::pair<std::string, FeatureMap>> maps;
  for (const auto& t : read_container(path)) {
    maps.emplace_back(t.id, to_feature_map(t));
  }
  if (maps.empty()) throw FormatError("'" + path + "' holds no feature maps");
  return maps;
}

}  // namespace detail

// Calibration record ids inside the container written by cmd_calibrate.
inline constexpr const char* kCalibMean = "pca.mean";
inline constexpr const char* kCalibComponent = "pca.component";
inline constexpr const char* kCalibThreshold = "calibration.threshold";
inline constexpr const char* kCalibRealized = "calibration.realized_fraction";

struct LoadedCalibration {
  PcaProjector projector;
  double threshold = 0.0;
};

inline LoadedCalibration load_calibration(const std::string& path) {
  std::map<std::string, NamedTensor> by_id;
  for (auto& t : read_container(path)) by_id[t.id] = std::move(t);
  auto need = [&](const char* id) -> const NamedTensor& {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw MissingInput("calibration '" + path + "' is missing record '" + id + "'");
    }
    return it->second;
  };
  LoadedCalibration cal;
  cal.projector.mean = to_embedding(need(kCalibMean));
  cal.projector.first_component = to_embedding(need(kCalibComponent));
  cal.projector.fitted_on = 2;  // actual count is irrelevant downstream
  const auto th = to_embedding(need(kCalibThreshold));
  if (th.size() != 1) throw FormatError("calibration threshold must be a single value");
  cal.threshold = th[0];
  if (cal.projector.mean.size() != cal.projector.first_component.size()) {
    throw FormatError("calibration mean and component disagree in dimension");
  }
  return cal;
}

// Fits the global projector on pooled tokens and calibrates the threshold so
// the target fraction of pooled attention mass lands above it.
inline void cmd_calibrate(const std::string& features_path, const RunConfig& cfg,
                          const std::string& out_path) {
  auto maps = detail::feature_maps_of(features_path);

  const auto cap = static_cast<std::size_t>(cfg.get_int("adaptive.calibration_sample"));
  std::vector<FeatureMap> sample;
  if (maps.size() > cap) {
    // Deterministic subsample driven by the master seed.
    std::vector<std::size_t> idx(maps.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = Rng(cfg.get_u64("seed")).derive("calibration-sample");
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    sample.reserve(cap);
    for (auto i : idx) sample.push_back(maps[i].second);
  } else {
    sample.reserve(maps.size());
    for (auto& [id, m] : maps) sample.push_back(m);
  }

  const AttentionCalibration cal =
      calibrate_attention(sample, cfg.get_double("adaptive.target_fraction"));

  std::vector<NamedTensor> out;
  out.push_back(to_tensor(kCalibMean, cal.projector.mean));
  out.push_back(to_tensor(kCalibComponent, cal.projector.first_component));
  out.push_back(to_tensor(kCalibThreshold, std::vector<double>{cal.threshold}));
  out.push_back(to_tensor(kCalibRealized, std::vector<double>{cal.realized_fraction}));
  write_container(out_path, out);
}

// Per-sample offline analysis: measured foreground proportion and the
// selected noise level, one row per input record in input order.
inline void cmd_analyze(const std::string& features_path,
                        const std::string& calibration_path, const RunConfig& cfg,
                        const std::string& out_path) {
  const LoadedCalibration cal = load_calibration(calibration_path);
  const NoisePolicy policy = noise_policy_from(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");

  Table table;
  table.columns = {"sample_id", "p", "l"};
  for (const auto& [id, map] : detail::feature_maps_of(features_path)) {
    const ForegroundAnalysis analysis =
        analyze_foreground(map, cal.projector, cal.threshold);
    Rng rng = sample_stream(seed, id);
    const int level = select_noise_level(policy, analysis.proportion, rng);
    table.rows.push_back({id, format_double(analysis.proportion),
                          std::to_string(level)});
  }
  write_tsv(out_path, table);
}

// Applies the forward-noising formula to each embedding at its analyzed
// level and emits the generator request stream: one container of noised
// embeddings plus a TSV sidecar with the request metadata.
inline void cmd_perturb(const std::string& embeddings_path,
                        const std::string& analysis_path, const RunConfig& cfg,
                        const std::string& out_container,
                        const std::string& out_meta) {
  std::map<std::string, EmbeddingVector> embeddings;
  std::vector<NamedTensor> records = read_container(embeddings_path);
  for (const auto& t : records) embeddings[t.id] = to_embedding(t);

  const Table analysis = read_tsv(analysis_path);
  const int col_id = analysis.require_column("sample_id");
  const int col_level = analysis.require_column("l");

  const NoiseSchedule schedule = schedule_from(cfg);
  const std::uint64_t seed = cfg.get_u64("seed");
  const int steps = static_cast<int>(cfg.get_int("request.T"));
  if (steps < 1) throw ConfigError("request.T must be >= 1");
  const double guidance = cfg.get_double("request.guidance");
  const std::string& tag = cfg.get_string("request.params_tag");

  std::vector<NamedTensor> out;
  Table meta;
  meta.columns = {"sample_id", "noise_level", "denoising_steps", "guidance_scale",
                  "latent_seed", "generator_params_tag"};
  for (const auto& row : analysis.rows) {
    const std::string& id = row[col_id];
    const auto it = embeddings.find(id);
    if (it == embeddings.end()) {
      throw MissingInput("embedding for sample '" + id + "' not found in '" +
                         embeddings_path + "'");
    }
    const int level = static_cast<int>(parse_int(row[col_level], "l"));
    Rng rng = sample_stream(seed, id);
    const EmbeddingVector noised = noisy_embedding(it->second, level, schedule, rng);
    const std::uint64_t latent_seed = rng.next_u64();
    out.push_back(to_tensor(id, noised));
    meta.rows.push_back({id, std::to_string(level), std::to_string(steps),
                         format_double(guidance), format_u64(latent_seed), tag});
  }
  write_container(out_container, out);
  write_tsv(out_meta, meta);
}

// Pair-quality table for two aligned view files. Pairs are matched by id;
// the projector is refit on the pooled tokens of both files unless the
// config routes scoring through the offline calibration.
inline void cmd_score(const std::string& features_a_path,
                      const std::string& features_b_path,
                      const std::optional<std::string>& calibration_path,
                      const RunConfig& cfg, const std::string& out_path) {
  auto views_a = detail::feature_maps_of(features_a_path);
  std::map<std::string, FeatureMap> views_b;
  for (auto& [id, m] : detail::feature_maps_of(features_b_path)) {
    views_b.emplace(id, std::move(m));
  }

  PcaProjector projector;
  if (cfg.get_bool("quality.use_global_projector")) {
    if (!calibration_path) {
      throw ConfigError(
          "quality.use_global_projector needs a calibration file (--calibration)");
    }
    projector = load_calibration(*calibration_path).projector;
  } else {
    PcaAccumulator acc(views_a.front().second.channels);
    for (const auto& [id, m] : views_a) acc.add_tokens(m);
    for (const auto& [id, m] : views_b) acc.add_tokens(m);
    projector = acc.fit();
  }

  Table table;
  table.columns = {"sample_id", "s_f", "s_b", "q"};
  for (const auto& [id, map_a] : views_a) {
    const auto it = views_b.find(id);
    if (it == views_b.end()) {
      throw MissingInput("view pair for sample '" + id + "' not found in '" +
                         features_b_path + "'");
    }
    const PairQuality q = pair_quality(map_a, it->second, projector);
    table.rows.push_back({id, format_double(q.foreground_sim),
                          format_double(q.background_sim), format_double(q.quality)});
  }
  write_tsv(out_path, table);
}

// Softmax re-weighting of a quality table. Rows sharing a value in an
// optional "batch" column form one softmax group; otherwise the whole file
// is one group.
inline void cmd_weights(const std::string& scores_path, const std::string& out_path) {
  const Table scores = read_tsv(scores_path);
  const int col_id = scores.require_column("sample_id");
  const int col_q = scores.require_column("q");
  const int col_batch = scores.column("batch");

  std::vector<std::string> group_of(scores.rows.size());
  for (std::size_t i = 0; i < scores.rows.size(); ++i) {
    group_of[i] = col_batch < 0 ? std::string() : scores.rows[i][col_batch];
  }

  std::vector<double> weights(scores.rows.size(), 0.0);
  std::vector<char> done(scores.rows.size(), 0);
  for (std::size_t i = 0; i < scores.rows.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> members;
    std::vector<double> qs;
    for (std::size_t j = i; j < scores.rows.size(); ++j) {
      if (!done[j] && group_of[j] == group_of[i]) {
        members.push_back(j);
        qs.push_back(parse_double(scores.rows[j][col_q], "q"));
        done[j] = 1;
      }
    }
    const auto w = batch_weights(qs);
    for (std::size_t k = 0; k < members.size(); ++k) weights[members[k]] = w[k];
  }

  Table out;
  out.columns = col_batch < 0 ? std::vector<std::string>{"sample_id", "w"}
                              : std::vector<std::string>{"sample_id", "batch", "w"};
  for (std::size_t i = 0; i < scores.rows.size(); ++i) {
    if (col_batch < 0) {
      out.rows.push_back({scores.rows[i][col_id], format_double(weights[i])});
    } else {
      out.rows.push_back({scores.rows[i][col_id], group_of[i], format_double(weights[i])});
    }
  }
  write_tsv(out_path, out);
}

// ---------------------------------------------------------------------------
// Experiment reports
// ---------------------------------------------------------------------------

// Deterministic key = value serialization. Wall clock stays out of the file:
// identical (config, seed) runs must emit identical bytes.
inline std::string serialize_report(const ExperimentReport& report,
                                    const RunConfig& cfg) {
  std::ostringstream out;
  out << "genview.report = 1\n";
  for (const auto& line : cfg.effective_lines()) out << "config." << line << "\n";
  out << "seed = " << format_u64(report.seed) << "\n";
  out << "epochs = " << report.epochs << "\n";
  out << "batch_size = " << report.batch_size << "\n";
  for (std::size_t i = 0; i < report.epoch_losses.size(); ++i) {
    out << "loss.epoch." << i << " = " << format_double(report.epoch_losses[i]) << "\n";
  }
  out << "probe.accuracy = " << format_double(report.probe_accuracy) << "\n";
  out << "quality.mean_clean = " << format_double(report.mean_quality_clean) << "\n";
  out << "quality.mean_corrupted = " << format_double(report.mean_quality_corrupted)
      << "\n";
  out << "weights.mean_clean = " << format_double(report.mean_weight_clean) << "\n";
  out << "weights.mean_corrupted = " << format_double(report.mean_weight_corrupted)
      << "\n";
  out << "weights.max_spread = " << format_double(report.max_weight_spread) << "\n";
  out << "batches.corrupted_lower_weight_fraction = "
      << format_double(report.corrupted_lower_weight_fraction) << "\n";
  out << "batches.mixed = " << report.mixed_batch_count << "\n";
  out << "batches.mixed_corrupted_lower = " << report.mixed_batch_corrupt_lower_count
      << "\n";
  out << "genview.applied_fraction = "
      << format_double(report.genview_applied_fraction) << "\n";
  out << "genview.flip_rate = " << format_double(report.realized_flip_rate) << "\n";
  out << "genview.mean_selected_level = "
      << format_double(report.mean_selected_level) << "\n";
  return out.str();
}

inline ExperimentReport cmd_train(const RunConfig& cfg, const std::string& out_path) {
  const ExperimentReport report = train_run(trainer_config_from(cfg));
  std::ofstream out(out_path, std::ios::binary);
  if (!out.is_open()) throw FormatError("cannot open '" + out_path + "' for writing");
  out << serialize_report(report, cfg);
  out.flush();
  if (!out) throw FormatError("write failed for '" + out_path + "'");
  return report;
}

inline std::map<std::string, std::string> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw MissingInput("cannot open report '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw FormatError("report '" + path + "' has a malformed line: " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (!kv.count("genview.report")) {
    throw FormatError("'" + path + "' is not an experiment report");
  }
  return kv;
}

enum class ReportFormat { Markdown, Csv };

// Side-by-side comparison of training reports.
inline std::string render_report_comparison(const std::vector<std::string>& paths,
                                            ReportFormat format) {
  const std::vector<std::string> columns = {
      "run",           "strategy",     "weighting", "alpha",
      "drift_kappa",   "final_loss",   "probe_acc", "flip_rate",
      "w_clean",       "w_corrupted"};

  std::vector<std::vector<std::string>> rows;
  for (const auto& path : paths) {
    const auto kv = read_report(path);
    auto field = [&](const std::string& key) -> std::string {
      const auto it = kv.find(key);
      return it == kv.end() ? std::string("-") : it->second;
    };
    std::string strategy = field("config.adaptive.strategy");
    if (strategy == "constant") {
      strategy += "(" + field("config.adaptive.constant_level") + ")";
    }
    const std::string weighting =
        field("config.quality.enabled") == "true" ? "quality" : "uniform";
    std::string final_loss = "-";
    const int epochs = static_cast<int>(parse_int(field("epochs"), "epochs"));
    if (epochs > 0) final_loss = field("loss.epoch." + std::to_string(epochs - 1));
    rows.push_back({std::filesystem::path(path).stem().string(), strategy, weighting,
                    field("config.trainer.alpha"), field("config.trainer.drift_kappa"),
                    final_loss, field("probe.accuracy"), field("genview.flip_rate"),
                    field("weights.mean_clean"), field("weights.mean_corrupted")});
  }

  std::ostringstream out;
  if (format == ReportFormat::Csv) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out << ',';
      out << columns[i];
    }
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << row[i];
      }
      out << '\n';
    }
  } else {
    auto emit_row = [&](const std::vector<std::string>& cells) {
      out << '|';
      for (const auto& c : cells) out << ' ' << c << " |";
      out << '\n';
    };
    emit_row(columns);
    std::vector<std::string> rule(columns.size(), "---");
    emit_row(rule);
    for (const auto& row : rows) emit_row(row);
  }
  return out.str();
}

inline void cmd_report(const std::vector<std::string>& paths, ReportFormat format,
                       const std::string& out_path) {
  const std::string rendered = render_report_comparison(paths, format);
  std::ofstream out(out_path, std::ios::binary);
  if (!out.is_open()) throw FormatError("cannot open '" + out_path + "' for writing");
  out << rendered;
  out.flush();
  if (!out) throw FormatError("write failed for '" + out_path + "'");
}

}  // namespace genview
