#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genview/errors.hpp"
#include "genview/table.hpp"

namespace genview {

// Flat key = value run configuration. Every key has a documented default;
// unknown keys are an error so typos never pass silently.
class RunConfig {
 public:
  enum class Type { Int, UInt64, Double, Bool, String };

  struct KeySpec {
    std::string_view key;
    Type type;
    std::string_view fallback;
    std::string_view doc;
  };

  static const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        {"seed", Type::UInt64, "42", "master seed for every randomized step"},
        {"schedule.num_steps", Type::Int, "1000", "forward-process steps T"},
        {"schedule.beta_start", Type::Double, "1e-04", "first beta of the linear schedule"},
        {"schedule.beta_end", Type::Double, "0.02", "last beta of the linear schedule"},
        {"adaptive.target_fraction", Type::Double, "0.4",
         "foreground token mass the threshold calibration targets"},
        {"adaptive.strategy", Type::String, "adaptive",
         "noise level selection: constant | random | adaptive"},
        {"adaptive.constant_level", Type::Int, "200",
         "level used by the constant strategy (one of 0,100,200,300,400)"},
        {"adaptive.calibration_sample", Type::Int, "10000",
         "max feature maps pooled when calibrating the threshold"},
        {"request.T", Type::Int, "20", "denoising steps forwarded to the generator"},
        {"request.guidance", Type::Double, "10", "classifier-free guidance scale"},
        {"request.params_tag", Type::String, "external-default",
         "opaque label naming the external generator weights"},
        {"quality.enabled", Type::Bool, "true",
         "reweight the contrastive loss by pair quality"},
        {"quality.use_global_projector", Type::Bool, "false",
         "score pairs with the offline projector instead of a per-batch refit"},
        {"loss.family", Type::String, "nce", "contrastive objective: nce | cos | kl"},
        {"loss.tau", Type::Double, "0.2", "InfoNCE temperature"},
        {"loss.sinkhorn_epsilon", Type::Double, "0.05", "assignment entropy scale"},
        {"loss.sinkhorn_iterations", Type::Int, "3", "assignment normalization rounds"},
        {"loss.prototype_temperature", Type::Double, "0.1",
         "softmax temperature over prototype scores"},
        {"trainer.epochs", Type::Int, "12", "training epochs"},
        {"trainer.batch_size", Type::Int, "32", "pairs per batch"},
        {"trainer.learning_rate", Type::Double, "0.4", "SGD step size"},
        {"trainer.alpha", Type::Double, "1",
         "probability of using the generated view as the positive"},
        {"trainer.drift_kappa", Type::Double, "0",
         "semantic drift severity of the simulated generator"},
        {"trainer.classes", Type::Int, "8", "synthetic classes"},
        {"trainer.samples_per_class", Type::Int, "24", "synthetic samples per class"},
        {"trainer.height", Type::Int, "8", "token grid height"},
        {"trainer.width", Type::Int, "8", "token grid width"},
        {"trainer.channels", Type::Int, "24", "token feature channels"},
        {"trainer.environments", Type::Int, "24", "background environments"},
        {"trainer.common_signal", Type::Double, "1.2",
         "weight of the shared foreground direction in class means"},
        {"trainer.class_signal", Type::Double, "1.5",
         "weight of the class-specific direction in class means"},
        {"trainer.feature_noise_sigma", Type::Double, "0.08", "per-token noise"},
        {"trainer.background_sigma", Type::Double, "0.35", "environment texture scale"},
        {"trainer.blob_min_fraction", Type::Double, "0.25", "min blob extent per axis"},
        {"trainer.blob_max_fraction", Type::Double, "0.65", "max blob extent per axis"},
        {"trainer.crop_min_fraction", Type::Double, "0.7", "min crop window per axis"},
        {"trainer.crop_max_fraction", Type::Double, "1", "max crop window per axis"},
        {"trainer.aug_noise_sigma", Type::Double, "0.02", "augmentation noise"},
        {"trainer.feature_dim", Type::Int, "32", "encoder feature width"},
        {"trainer.projection_dim", Type::Int, "16", "projection head width"},
        {"trainer.encoder_init_scale", Type::Double, "1", "weight init scale"},
        {"trainer.probe_holdout", Type::Double, "0.3", "held-out fraction per class"},
        {"trainer.probe_learning_rate", Type::Double, "1", "probe GD step size"},
        {"trainer.probe_max_epochs", Type::Int, "500", "probe GD epoch cap"},
        {"trainer.probe_tolerance", Type::Double, "1e-06", "probe GD loss tolerance"},
    };
    return specs;
  }

  static const KeySpec* find_spec(std::string_view key) {
    for (const auto& s : key_specs()) {
      if (s.key == key) return &s;
    }
    return nullptr;
  }

  RunConfig() {
    for (const auto& s : key_specs()) values_[std::string(s.key)] = std::string(s.fallback);
  }

  static RunConfig from_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t nl = text.find('\n', start);
      std::string line = text.substr(
          start, nl == std::string::npos ? std::string::npos : nl - start);
      start = nl == std::string::npos ? text.size() + 1 : nl + 1;
      ++line_no;

      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected 'key = value'");
      }
      cfg.set(std::string(trim(trimmed.substr(0, eq))),
              std::string(trim(trimmed.substr(eq + 1))));
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw ConfigError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_text(text, path);
  }

  // Validates both the key and the value representation immediately.
  void set(const std::string& key, const std::string& value) {
    const KeySpec* spec = find_spec(key);
    if (spec == nullptr) throw ConfigError("unknown config key '" + key + "'");
    check_value(*spec, value);
    values_[key] = value;
  }

  std::int64_t get_int(std::string_view key) const {
    return parse_checked_int(raw(key), key);
  }
  std::uint64_t get_u64(std::string_view key) const {
    try {
      return parse_u64(raw(key), std::string(key));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  double get_double(std::string_view key) const {
    try {
      return parse_double(raw(key), std::string(key));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  bool get_bool(std::string_view key) const {
    const std::string& v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config key '" + std::string(key) + "' must be true or false");
  }
  const std::string& get_string(std::string_view key) const { return raw(key); }

  // Sorted effective key = value listing (defaults included).
  std::vector<std::string> effective_lines() const {
    std::vector<std::string> lines;
    lines.reserve(values_.size());
    for (const auto& [k, v] : values_) lines.push_back(k + " = " + v);
    return lines;
  }

 private:
  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
      s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
      s.remove_suffix(1);
    }
    return s;
  }

  static std::int64_t parse_checked_int(const std::string& v, std::string_view key) {
    try {
      return parse_int(v, std::string(key));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }

  static void check_value(const KeySpec& spec, const std::string& value) {
    try {
      switch (spec.type) {
        case Type::Int:
          parse_int(value, std::string(spec.key));
          break;
        case Type::UInt64:
          parse_u64(value, std::string(spec.key));
          break;
        case Type::Double:
          parse_double(value, std::string(spec.key));
          break;
        case Type::Bool:
          if (value != "true" && value != "false") {
            throw ConfigError("config key '" + std::string(spec.key) +
                              "' must be true or false, got '" + value + "'");
          }
          break;
        case Type::String:
          break;
      }
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }

  const std::string& raw(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
    return it->second;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace genview
