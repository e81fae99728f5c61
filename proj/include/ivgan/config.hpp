#pragma once

#include <json.hpp>

#include "ivgan/io.hpp"

namespace ivgan {

// Everything a run needs, resolved from a JSON config file. An empty object
// {} yields the paper defaults; unknown keys are rejected by name.
struct RunConfig {
  TrainConfig train;
  NetConfig net = NetConfig::full();
  TaskSpec task;
  SynthSpec data;
  int64_t dataset_size = 256;
};

namespace detail {

using json = nlohmann::json;

inline std::string scale_name(ScalePreset s) {
  return s == ScalePreset::Full ? "full" : "desk";
}
inline ScalePreset scale_from(const std::string& s) {
  if (s == "full") return ScalePreset::Full;
  if (s == "desk") return ScalePreset::Desk;
  throw std::invalid_argument("config: scale must be \"full\" or \"desk\", got \"" + s + "\"");
}

inline std::string task_name(Task t) {
  switch (t) {
    case Task::ColorizeSupervised: return "colorize-sup";
    case Task::ColorizeUnsupervised: return "colorize-unsup";
    case Task::Inpaint: return "inpaint";
    case Task::Predict: return "predict";
  }
  return "inpaint";
}
inline Task task_from(const std::string& s) {
  if (s == "colorize-sup") return Task::ColorizeSupervised;
  if (s == "colorize-unsup") return Task::ColorizeUnsupervised;
  if (s == "inpaint") return Task::Inpaint;
  if (s == "predict") return Task::Predict;
  throw std::invalid_argument("config: unknown task \"" + s + "\"");
}

inline std::string corruption_name(Corruption c) {
  return c == Corruption::SaltPepper ? "salt-pepper" : "hole";
}
inline Corruption corruption_from(const std::string& s) {
  if (s == "salt-pepper") return Corruption::SaltPepper;
  if (s == "hole") return Corruption::Hole;
  throw std::invalid_argument("config: unknown corruption \"" + s + "\"");
}

inline std::string hole_mode_name(HoleMode m) {
  return m == HoleMode::Center ? "center" : "random";
}
inline HoleMode hole_mode_from(const std::string& s) {
  if (s == "center") return HoleMode::Center;
  if (s == "random") return HoleMode::Random;
  throw std::invalid_argument("config: unknown hole_mode \"" + s + "\"");
}

inline std::string preset_name(SynthPreset p) {
  return p == SynthPreset::MovingSquaresStaticBg ? "moving-squares-static-bg"
                                                 : "moving-squares-panning-bg";
}
inline SynthPreset preset_from(const std::string& s) {
  if (s == "moving-squares-static-bg") return SynthPreset::MovingSquaresStaticBg;
  if (s == "moving-squares-panning-bg") return SynthPreset::MovingSquaresPanningBg;
  throw std::invalid_argument("config: unknown data_preset \"" + s + "\"");
}

template <typename T, typename Check>
void take(json& j, const char* key, T& out, Check&& check) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config: wrong type for key \"") +
                                key + "\"");
  }
  if (!check(out))
    throw std::invalid_argument(std::string("config: value out of range for key \"") +
                                key + "\"");
  j.erase(key);
}

template <typename T>
void take(json& j, const char* key, T& out) {
  take(j, key, out, [](const T&) { return true; });
}

}  // namespace detail

inline RunConfig config_from_json_text(const std::string& text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be a JSON object");

  RunConfig cfg;

  // scale first: it selects the NetConfig preset the other keys refine
  std::string scale = detail::scale_name(cfg.train.scale);
  detail::take(j, "scale", scale);
  cfg.train.scale = detail::scale_from(scale);
  cfg.net = cfg.train.scale == ScalePreset::Full ? NetConfig::full()
                                                 : NetConfig::desk();

  auto nonneg = [](const double& v) { return v >= 0; };
  auto nonneg_i = [](const int64_t& v) { return v >= 0; };
  auto positive_i = [](const int64_t& v) { return v >= 1; };

  detail::take(j, "lambda", cfg.train.lambda, nonneg);
  detail::take(j, "nu", cfg.train.nu, nonneg);
  detail::take(j, "alpha", cfg.train.alpha, nonneg);
  detail::take(j, "beta1", cfg.train.beta1,
               [](const double& v) { return v >= 0 && v < 1; });
  detail::take(j, "beta2", cfg.train.beta2,
               [](const double& v) { return v >= 0 && v < 1; });
  detail::take(j, "critic_ratio", cfg.train.critic_ratio, positive_i);
  detail::take(j, "batch_size", cfg.train.batch_size,
               [](const int64_t& v) { return v >= 2; });
  detail::take(j, "total_steps", cfg.train.total_steps, nonneg_i);
  detail::take(j, "checkpoint_every", cfg.train.checkpoint_every, nonneg_i);
  detail::take(j, "lr_halve_at", cfg.train.lr_halve_at);
  detail::take(j, "seed", cfg.train.seed);

  detail::take(j, "base_width", cfg.net.base_width, positive_i);

  std::string task = detail::task_name(cfg.task.task);
  detail::take(j, "task", task);
  cfg.task.task = detail::task_from(task);
  cfg.task.nu = cfg.train.nu;
  std::string corruption = detail::corruption_name(cfg.task.corruption);
  detail::take(j, "corruption", corruption);
  cfg.task.corruption = detail::corruption_from(corruption);
  detail::take(j, "noise_prob", cfg.task.noise_prob,
               [](const double& v) { return v >= 0 && v <= 1; });
  detail::take(j, "hole_size", cfg.task.hole_size, nonneg_i);
  std::string hole_mode = detail::hole_mode_name(cfg.task.hole_mode);
  detail::take(j, "hole_mode", hole_mode);
  cfg.task.hole_mode = detail::hole_mode_from(hole_mode);

  std::string preset = detail::preset_name(cfg.data.preset);
  detail::take(j, "data_preset", preset);
  cfg.data.preset = detail::preset_from(preset);
  detail::take(j, "data_seed", cfg.data.seed);
  detail::take(j, "dataset_size", cfg.dataset_size, positive_i);

  if (!j.empty())
    throw std::invalid_argument("config: unknown key \"" + j.begin().key() + "\"");

  // the synthetic source renders at the network's input geometry
  cfg.data.frames = cfg.net.frames;
  cfg.data.height = cfg.net.height;
  cfg.data.width = cfg.net.width;

  cfg.train.validate();
  cfg.net.validate();
  cfg.task.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  return config_from_json_text(detail::read_file(path));
}

// Every resolved value echoed back out; loading this text again yields an
// identical resolved config (idempotence).
inline std::string resolved_config_text(const RunConfig& cfg) {
  detail::json j;
  j["scale"] = detail::scale_name(cfg.train.scale);
  j["lambda"] = cfg.train.lambda;
  j["nu"] = cfg.train.nu;
  j["alpha"] = cfg.train.alpha;
  j["beta1"] = cfg.train.beta1;
  j["beta2"] = cfg.train.beta2;
  j["critic_ratio"] = cfg.train.critic_ratio;
  j["batch_size"] = cfg.train.batch_size;
  j["total_steps"] = cfg.train.total_steps;
  j["checkpoint_every"] = cfg.train.checkpoint_every;
  j["lr_halve_at"] = cfg.train.lr_halve_at;
  j["seed"] = cfg.train.seed;
  j["base_width"] = cfg.net.base_width;
  j["task"] = detail::task_name(cfg.task.task);
  j["corruption"] = detail::corruption_name(cfg.task.corruption);
  j["noise_prob"] = cfg.task.noise_prob;
  j["hole_size"] = cfg.task.hole_size;
  j["hole_mode"] = detail::hole_mode_name(cfg.task.hole_mode);
  j["data_preset"] = detail::preset_name(cfg.data.preset);
  j["data_seed"] = cfg.data.seed;
  j["dataset_size"] = cfg.dataset_size;
  return j.dump(2) + "\n";
}

}  // namespace ivgan
