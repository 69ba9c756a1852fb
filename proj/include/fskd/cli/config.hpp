#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fskd/core/error.hpp"
#include "fskd/data/batch.hpp"
#include "fskd/distill/losses.hpp"
#include "fskd/model/backbone.hpp"

namespace fskd {

enum class Task { face_verification, identification, digit_classification };

inline Task task_from_string(const std::string& s) {
  if (s == "face_verification") return Task::face_verification;
  if (s == "identification") return Task::identification;
  if (s == "digit_classification") return Task::digit_classification;
  throw ConfigError("unknown task '" + s + "'");
}

inline const char* to_string(Task t) {
  switch (t) {
    case Task::face_verification: return "face_verification";
    case Task::identification: return "identification";
    case Task::digit_classification: return "digit_classification";
  }
  return "?";
}

struct OptimizerSchedule {
  double lr = 0.05;
  std::vector<std::size_t> milestones{12, 17};  // epochs at which lr decays
  double decay = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("schedule: lr must be positive");
    if (epochs == 0) throw ConfigError("schedule: epochs must be positive");
    if (batch_size < 2) throw ConfigError("schedule: batch_size must be >= 2");
    if (decay <= 0.0 || decay > 1.0) throw ConfigError("schedule: decay must be in (0,1]");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1]) throw ConfigError("schedule: milestones must be strictly increasing");
  }

  double lr_at_epoch(std::size_t epoch) const {
    double v = lr;
    for (auto m : milestones)
      if (epoch >= m) v *= decay;
    return v;
  }
};

// Flat key=value run configuration. Every key can also be given as a CLI
// flag of the same name; later assignments win.
struct RunConfig {
  Task task = Task::digit_classification;
  BackboneConfig backbone;
  double head_scale = 64.0;
  double head_margin = 0.35;
  DistillConfig distill;
  ResolutionSetting resolution{ResolutionMode::single, {4}};
  OptimizerSchedule schedule;
  std::uint64_t seed = 1;
  std::string train_data, eval_data;
  std::string checkpoint_dir = ".";
  std::string report_dir = ".";
  std::string pair_list, gallery_data;
  std::size_t eval_every = 5;  // epochs between eval points; 0 = final only
  double norm_mean = 0.5, norm_std = 0.5;
  bool cache_teacher = true;
  bool verification_folds10 = false;

  void validate() const {
    backbone.validate();
    schedule.validate();
    distill.validate();
    resolution.validate();
    if (head_scale <= 0.0) throw ConfigError("scale must be positive");
    if (head_margin < 0.0 || head_margin >= 1.0) throw ConfigError("margin must be in [0,1)");
    if (norm_std <= 0.0) throw ConfigError("norm_std must be positive");
  }

  bool augment_flip(const Dataset& ds) const { return ds.face_domain && task != Task::digit_classification; }

  unsigned eval_ratio() const {
    return resolution.mode == ResolutionMode::single ? resolution.ratios[0]
                                                     : *std::max_element(resolution.ratios.begin(),
                                                                         resolution.ratios.end());
  }
};

namespace detail {

inline std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "desk") {
    cfg.schedule = OptimizerSchedule{};  // 20 epochs, lr 0.05, decay at 12/17, batch 64
  } else if (preset == "paper-digit") {
    cfg.schedule.lr = 0.01;
    cfg.schedule.milestones = {30, 60, 80};
    cfg.schedule.decay = 0.1;
    cfg.schedule.epochs = 90;
    cfg.schedule.batch_size = 64;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (use 'desk' or 'paper-digit')");
  }
}

inline void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_uint;
  if (key == "task") cfg.task = task_from_string(value);
  else if (key == "preset") apply_config_preset(cfg, value);
  else if (key == "widths") {
    cfg.backbone.block_channel_widths.clear();
    for (const auto& tok : detail::split_csv_list(value))
      cfg.backbone.block_channel_widths.push_back(parse_uint("widths", tok));
  } else if (key == "blocks_per_stage") cfg.backbone.blocks_per_stage = parse_uint(key, value);
  else if (key == "embedding_dim") cfg.backbone.embedding_dim = parse_uint(key, value);
  else if (key == "input_size") cfg.backbone.input_size = parse_uint(key, value);
  else if (key == "in_channels") cfg.backbone.in_channels = parse_uint(key, value);
  else if (key == "scale") cfg.head_scale = parse_double(key, value);
  else if (key == "margin") cfg.head_margin = parse_double(key, value);
  else if (key == "distill") cfg.distill.kind = distill_kind_from_string(value);
  else if (key == "lambda") cfg.distill.lambda_distill = parse_double(key, value);
  else if (key == "flatten_mode") cfg.distill.flatten_mode = flatten_mode_from_string(value);
  else if (key == "resolution_mode") {
    if (value == "single") cfg.resolution.mode = ResolutionMode::single;
    else if (value == "multiple") cfg.resolution.mode = ResolutionMode::multiple;
    else throw ConfigError("config: resolution_mode must be 'single' or 'multiple'");
  } else if (key == "ratios") {
    cfg.resolution.ratios.clear();
    for (const auto& tok : detail::split_csv_list(value))
      cfg.resolution.ratios.push_back(static_cast<unsigned>(parse_uint("ratios", tok)));
  } else if (key == "lr") cfg.schedule.lr = parse_double(key, value);
  else if (key == "milestones") {
    cfg.schedule.milestones.clear();
    if (!value.empty())
      for (const auto& tok : detail::split_csv_list(value)) cfg.schedule.milestones.push_back(parse_uint(key, tok));
  } else if (key == "decay") cfg.schedule.decay = parse_double(key, value);
  else if (key == "epochs") cfg.schedule.epochs = parse_uint(key, value);
  else if (key == "batch_size") cfg.schedule.batch_size = parse_uint(key, value);
  else if (key == "momentum") cfg.schedule.momentum = parse_double(key, value);
  else if (key == "weight_decay") cfg.schedule.weight_decay = parse_double(key, value);
  else if (key == "seed") cfg.seed = parse_uint(key, value);
  else if (key == "train_data") cfg.train_data = value;
  else if (key == "eval_data") cfg.eval_data = value;
  else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
  else if (key == "report_dir") cfg.report_dir = value;
  else if (key == "pair_list") cfg.pair_list = value;
  else if (key == "gallery_data") cfg.gallery_data = value;
  else if (key == "eval_every") cfg.eval_every = parse_uint(key, value);
  else if (key == "norm_mean") cfg.norm_mean = parse_double(key, value);
  else if (key == "norm_std") cfg.norm_std = parse_double(key, value);
  else if (key == "cache_teacher") cfg.cache_teacher = parse_bool(key, value);
  else if (key == "verification_folds10") cfg.verification_folds10 = parse_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

// `#` starts a comment; blank lines ignored; `key = value` with optional
// whitespace.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_kv(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace fskd
