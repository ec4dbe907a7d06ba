#pragma once

// Run configuration and the pipeline commands behind the CLI. Every command
// reads and writes inside one output directory:
//
//   scenes.jsonl                 synth
//   corrupted.jsonl              corrupt
//   corruption_report.json       corrupt
//   shards/{train,val,test}.shard, stats.json            build
//   model.ckpt, curves.json      train
//   eval_report.json, baseline_cv.json                   eval
//   ablation.json                ablate
//   report.txt, loss_curve.svg   report
//   manifest_<command>.json      every command

#include "egoflow/bench.hpp"
#include "egoflow/ego_noise.hpp"
#include "egoflow/scene_synth.hpp"
#include "egoflow/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace egoflow {

struct AblateConfig {
  std::vector<uint64_t> seeds{0, 1, 2};
  std::vector<std::string> rows{"SI", "SI+EA", "SI+EA+SE"};
  int epochs = -1;  // < 0: train.epochs
};

struct RunConfig {
  uint64_t seed = 0;
  int scenes = 100;
  SceneSpec scene;
  NoiseProfile noise;
  BenchConfig bench;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AblateConfig ablate;

  // Full defaults; desk-scale model and schedule.
  static RunConfig defaults();
  // Missing keys keep defaults; unknown keys throw ConfigError. The top-level
  // seed is propagated to every stage.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void set_seed(uint64_t s);
};

// Sets a dotted key ("eval.steps") of a config document to a JSON value.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value);

struct RunContext {
  std::filesystem::path out;
  std::string config_path;     // empty: built-in defaults
  nlohmann::json document;     // merged config document (file + overrides)
  nlohmann::json overrides = nlohmann::json::object();
};

struct CommandResult {
  std::vector<std::string> artifacts;  // relative to the output directory
  std::string text;                    // human-readable summary
};

const std::vector<std::string>& command_names();

// Runs one command and writes manifest_<command>.json, also on failure
// (with the artifacts present so far) before rethrowing.
CommandResult run_command(const std::string& command, const RunContext& ctx);

std::string version_string();

// Plain-text metric tables; ablation rows follow the grid order.
std::string format_eval_table(const nlohmann::json& eval_report, const nlohmann::json* baseline);
std::string format_ablation_table(const nlohmann::json& ablation, const std::vector<int>& ks);
// Minimal SVG line plot of per-epoch training loss.
std::string loss_curve_svg(const nlohmann::json& curves);

}  // namespace egoflow
