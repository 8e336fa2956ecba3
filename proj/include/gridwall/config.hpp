#pragma once

// One JSON file for a whole run: {"track": {...}, "reward": {...}, "train": {...}}.
// Every section and key is optional; unknown keys are rejected.

#include <filesystem>
#include <fstream>

#include "gridwall/trainer.hpp"

namespace gridwall {

inline json to_json(const RewardConfig& r) {
  return json{{"t_c", r.t_c}, {"c_win", r.c_win}, {"c_reg", r.c_reg}, {"gamma", r.gamma}};
}

inline RewardConfig reward_config_from_json(const json& j) {
  detail::reject_unknown(j, {"t_c", "c_win", "c_reg", "gamma"}, "reward");
  RewardConfig r;
  detail::read_opt(j, "t_c", r.t_c, "reward");
  detail::read_opt(j, "c_win", r.c_win, "reward");
  detail::read_opt(j, "c_reg", r.c_reg, "reward");
  detail::read_opt(j, "gamma", r.gamma, "reward");
  r.validate();
  return r;
}

struct RunConfig {
  TrackConfig track;
  RewardConfig reward;
  TrainConfig train;
};

inline json to_json(const RunConfig& c) {
  return json{{"track", to_json(c.track)}, {"reward", to_json(c.reward)}, {"train", to_json(c.train)}};
}

inline RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, {"track", "reward", "train"}, "config");
  RunConfig c;
  if (j.contains("track")) c.track = track_config_from_json(j.at("track"));
  if (j.contains("reward")) c.reward = reward_config_from_json(j.at("reward"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace gridwall
