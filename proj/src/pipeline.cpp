#include "egoflow/pipeline.hpp"

#include "egoflow/config.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace egoflow {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

void reject_seed(const nlohmann::json& section, const std::string& where) {
  if (section.is_object() && section.contains("seed")) {
    throw ConfigError(where + ".seed is not configurable; set the top-level seed");
  }
}

SceneSpec scene_from_config(const nlohmann::json& j) {
  check_keys(j, {"n_agents", "duration_frames", "dt", "arena", "behavior_mix"}, "synth");
  SceneSpec s;
  read_key(j, "n_agents", s.n_agents, "synth");
  read_key(j, "duration_frames", s.duration_frames, "synth");
  read_key(j, "dt", s.dt, "synth");
  if (j.contains("arena")) {
    const auto& a = j["arena"];
    check_keys(a, {"width", "height"}, "synth.arena");
    read_key(a, "width", s.arena.width, "synth.arena");
    read_key(a, "height", s.arena.height, "synth.arena");
  }
  if (j.contains("behavior_mix")) {
    const auto& b = j["behavior_mix"];
    check_keys(b, {"crossing", "following", "pass_by", "static_avoid"}, "synth.behavior_mix");
    read_key(b, "crossing", s.behavior_mix.crossing, "synth.behavior_mix");
    read_key(b, "following", s.behavior_mix.following, "synth.behavior_mix");
    read_key(b, "pass_by", s.behavior_mix.pass_by, "synth.behavior_mix");
    read_key(b, "static_avoid", s.behavior_mix.static_avoid, "synth.behavior_mix");
  }
  try {
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  return s;
}

nlohmann::json scene_to_config(const SceneSpec& s) {
  return {{"n_agents", s.n_agents},
          {"duration_frames", s.duration_frames},
          {"dt", s.dt},
          {"arena", {{"width", s.arena.width}, {"height", s.arena.height}}},
          {"behavior_mix",
           {{"crossing", s.behavior_mix.crossing},
            {"following", s.behavior_mix.following},
            {"pass_by", s.behavior_mix.pass_by},
            {"static_avoid", s.behavior_mix.static_avoid}}}};
}

NoiseProfile noise_from_config(const nlohmann::json& j) {
  check_keys(j, {"fov_deg", "occlusion_radius", "id_switch_dist", "base_sigma", "range_sigma_per_m", "drift_sigma"},
             "noise");
  NoiseProfile n;
  read_key(j, "fov_deg", n.fov_deg, "noise");
  read_key(j, "occlusion_radius", n.occlusion_radius, "noise");
  read_key(j, "id_switch_dist", n.id_switch_dist, "noise");
  read_key(j, "base_sigma", n.base_sigma, "noise");
  read_key(j, "range_sigma_per_m", n.range_sigma_per_m, "noise");
  read_key(j, "drift_sigma", n.drift_sigma, "noise");
  try {
    n.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  return n;
}

nlohmann::json noise_to_config(const NoiseProfile& n) {
  return {{"fov_deg", n.fov_deg},
          {"occlusion_radius", n.occlusion_radius},
          {"id_switch_dist", n.id_switch_dist},
          {"base_sigma", n.base_sigma},
          {"range_sigma_per_m", n.range_sigma_per_m},
          {"drift_sigma", n.drift_sigma}};
}

BenchConfig bench_from_config(const nlohmann::json& j) {
  check_keys(j,
             {"history_steps", "future_steps", "min_valid", "stride", "speed_limit", "max_derivative_gap", "weights",
              "train_fraction", "val_fraction"},
             "bench");
  BenchConfig b;
  read_key(j, "history_steps", b.history_steps, "bench");
  read_key(j, "future_steps", b.future_steps, "bench");
  read_key(j, "min_valid", b.min_valid, "bench");
  read_key(j, "stride", b.stride, "bench");
  read_key(j, "speed_limit", b.speed_limit, "bench");
  read_key(j, "max_derivative_gap", b.max_derivative_gap, "bench");
  read_key(j, "train_fraction", b.train_fraction, "bench");
  read_key(j, "val_fraction", b.val_fraction, "bench");
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    check_keys(w, {"pos", "vel", "acc"}, "bench.weights");
    read_key(w, "pos", b.weights.pos, "bench.weights");
    read_key(w, "vel", b.weights.vel, "bench.weights");
    read_key(w, "acc", b.weights.acc, "bench.weights");
  }
  if (b.history_steps < 2 || b.future_steps < 1 || b.min_valid < 1 || b.min_valid > b.history_steps ||
      b.stride < 1 || !(b.speed_limit > 0.0) || b.max_derivative_gap < 1) {
    throw ConfigError("bench: invalid window settings");
  }
  if (b.train_fraction <= 0.0 || b.val_fraction < 0.0 || b.train_fraction + b.val_fraction >= 1.0) {
    throw ConfigError("bench: split fractions must leave a test share");
  }
  return b;
}

nlohmann::json bench_to_config(const BenchConfig& b) {
  return {{"history_steps", b.history_steps},
          {"future_steps", b.future_steps},
          {"min_valid", b.min_valid},
          {"stride", b.stride},
          {"speed_limit", b.speed_limit},
          {"max_derivative_gap", b.max_derivative_gap},
          {"weights", {{"pos", b.weights.pos}, {"vel", b.weights.vel}, {"acc", b.weights.acc}}},
          {"train_fraction", b.train_fraction},
          {"val_fraction", b.val_fraction}};
}

nlohmann::json strip_seed(nlohmann::json j) {
  j.erase("seed");
  return j;
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput(path.string());
  std::ifstream in(path);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed record in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput(path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, size_t width) { return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' '); }

struct Shard {
  ShardHeader header;
  std::vector<BenchmarkSample> samples;
};

Shard load_shard(const RunContext& ctx, const RunConfig& cfg, Split split) {
  const fs::path p = ctx.out / "shards" / (std::string(split_name(split)) + ".shard");
  if (!fs::exists(p)) throw MissingInput(p.string());
  Shard s;
  s.samples = read_shard(p, &s.header, cfg.bench);
  if (s.header.history_steps != cfg.bench.history_steps || s.header.future_steps != cfg.bench.future_steps) {
    throw ConfigError("shard " + p.string() + " horizons differ from the config");
  }
  return s;
}

// ---------------------------------------------------------------- commands

void cmd_synth(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  std::ostringstream lines;
  for (int i = 0; i < cfg.scenes; ++i) lines << scene_to_json(generate_scene(cfg.scene, i)).dump() << '\n';
  write_text(ctx.out / "scenes.jsonl", lines.str());
  res.artifacts.push_back("scenes.jsonl");
  res.text = "synth: " + std::to_string(cfg.scenes) + " scenes\n";
}

void cmd_corrupt(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  const auto scenes = read_jsonl(ctx.out / "scenes.jsonl");
  std::ostringstream lines;
  nlohmann::json reports = nlohmann::json::array();
  double hidden = 0.0;
  for (const auto& j : scenes) {
    auto [corrupted, report] = corrupt_scene(scene_from_json(j), cfg.noise);
    lines << corrupted_to_json(corrupted).dump() << '\n';
    reports.push_back(report_to_json(report));
    hidden += report.invisible_rate();
  }
  write_text(ctx.out / "corrupted.jsonl", lines.str());
  res.artifacts.push_back("corrupted.jsonl");
  const double rate = scenes.empty() ? 0.0 : hidden / static_cast<double>(scenes.size());
  write_json(ctx.out / "corruption_report.json", {{"scenes", reports}, {"mean_invisible_rate", rate}});
  res.artifacts.push_back("corruption_report.json");
  res.text = "corrupt: " + std::to_string(scenes.size()) + " scenes, mean invisible rate " + fmt(rate) + "\n";
}

void cmd_build(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  const auto scenes = read_jsonl(ctx.out / "scenes.jsonl");
  const auto corrupted = read_jsonl(ctx.out / "corrupted.jsonl");
  if (scenes.size() != corrupted.size()) throw Error("scenes.jsonl and corrupted.jsonl differ in length");
  std::vector<BenchmarkSample> all;
  size_t dropped = 0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const CleanScene clean = scene_from_json(scenes[i]);
    const CorruptedScene obs = corrupted_from_json(corrupted[i]);
    if (clean.scene_id != obs.scene_id) throw Error("scene order differs between clean and corrupted files");
    const AlignedScene aligned = align_scene(clean, obs, cfg.bench);
    dropped += aligned.association.dropped.size();
    auto w = window_samples(aligned, cfg.bench);
    all.insert(all.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  split_chronological(all, cfg.bench);
  const double scale = normalization_scale(all);
  assign_norm(all, scale);

  nlohmann::json stats;
  ShardHeader header;
  header.history_steps = cfg.bench.history_steps;
  header.future_steps = cfg.bench.future_steps;
  header.dt = cfg.scene.dt;
  header.scale = scale;
  for (Split split : {Split::train, Split::val, Split::test}) {
    std::vector<BenchmarkSample> part;
    for (const auto& s : all) {
      if (s.split == split) part.push_back(s);
    }
    header.count = part.size();
    const std::string rel = std::string("shards/") + split_name(split) + ".shard";
    write_shard(ctx.out / rel, header, part, cfg.bench);
    res.artifacts.push_back(rel);
    stats[split_name(split)] = stats_to_json(bench_stats(part));
  }
  stats["all"] = stats_to_json(bench_stats(all));
  stats["scale"] = scale;
  stats["dropped_tracks"] = dropped;
  stats["data_fingerprint"] = header.data_fingerprint();
  write_json(ctx.out / "stats.json", stats);
  res.artifacts.push_back("stats.json");
  res.text = "build: " + std::to_string(all.size()) + " samples (train " + std::to_string(stats["train"]["samples"].get<size_t>()) +
             ", val " + std::to_string(stats["val"]["samples"].get<size_t>()) + ", test " +
             std::to_string(stats["test"]["samples"].get<size_t>()) + ")\n";
}

void cmd_stats(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  std::ostringstream os;
  os << pad("split", 8) << pad("samples", 10) << pad("scenes", 8) << pad("agents", 8) << pad("noisy rate", 12)
     << "history MSE (m^2)\n";
  std::vector<BenchmarkSample> all;
  for (Split split : {Split::train, Split::val, Split::test}) {
    Shard s = load_shard(ctx, cfg, split);
    const BenchStats st = bench_stats(s.samples);
    os << pad(split_name(split), 8) << pad(std::to_string(st.samples), 10) << pad(std::to_string(st.scenes), 8)
       << pad(std::to_string(st.agents), 8) << pad(fmt(st.noisy_rate), 12) << fmt(st.history_mse) << "\n";
    all.insert(all.end(), s.samples.begin(), s.samples.end());
  }
  const BenchStats st = bench_stats(all);
  os << pad("all", 8) << pad(std::to_string(st.samples), 10) << pad(std::to_string(st.scenes), 8)
     << pad(std::to_string(st.agents), 8) << pad(fmt(st.noisy_rate), 12) << fmt(st.history_mse) << "\n";
  res.text = os.str();
}

void cmd_train(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  const Shard train_shard = load_shard(ctx, cfg, Split::train);
  const Shard val_shard = load_shard(ctx, cfg, Split::val);
  TrainHooks hooks;
  hooks.failure_path = ctx.out / "failed_batch.json";
  hooks.on_epoch = [](const EpochRecord& r) {
    std::clog << "epoch " << r.epoch << " loss " << fmt(r.loss) << " lr " << r.lr;
    if (r.val_min_ade >= 0.0) std::clog << " val minADE " << fmt(r.val_min_ade);
    std::clog << "\n";
  };
  TrainResult tr = train(train_shard.samples, val_shard.samples, cfg.model, cfg.train, hooks);

  CheckpointMeta meta;
  meta.data = {{"T_p", train_shard.header.history_steps},
               {"T_f", train_shard.header.future_steps},
               {"scale", train_shard.header.scale},
               {"fingerprint", train_shard.header.data_fingerprint()}};
  meta.extra = {{"train", cfg.train.to_json()}, {"best_epoch", tr.curves.best_epoch}};
  save_checkpoint(ctx.out / "model.ckpt", tr.model, meta);
  res.artifacts.push_back("model.ckpt");
  write_json(ctx.out / "curves.json", tr.curves.to_json());
  res.artifacts.push_back("curves.json");
  std::ostringstream os;
  os << "train: " << cfg.train.epochs << " epochs on " << train_shard.samples.size() << " samples";
  if (tr.curves.best_epoch >= 0) os << ", best val minADE@" << cfg.model.modes << " " << fmt(tr.curves.best_val)
                                    << " at epoch " << tr.curves.best_epoch;
  os << "\n";
  res.text = os.str();
}

void cmd_eval(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  const std::string expected = config_fingerprint(cfg.model.to_json());
  CheckpointMeta meta;
  const BiFlowModel model = load_checkpoint(ctx.out / "model.ckpt", &meta, &expected);
  const Shard test = load_shard(ctx, cfg, Split::test);
  const EvalReport report =
      evaluate(model, test.samples, cfg.eval, meta.data.value("fingerprint", std::string()), test.header.data_fingerprint());
  const nlohmann::json rj = report.to_json();
  write_json(ctx.out / "eval_report.json", rj);
  res.artifacts.push_back("eval_report.json");
  const nlohmann::json bj = evaluate_baseline_cv(test.samples).to_json();
  write_json(ctx.out / "baseline_cv.json", bj);
  res.artifacts.push_back("baseline_cv.json");
  res.text = format_eval_table(rj, &bj);
}

void cmd_ablate(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  const Shard train_shard = load_shard(ctx, cfg, Split::train);
  const Shard val_shard = load_shard(ctx, cfg, Split::val);
  const Shard test = load_shard(ctx, cfg, Split::test);
  std::vector<AblationRow> rows;
  const auto grid = ablation_grid();
  for (const auto& name : cfg.ablate.rows) {
    auto it = std::find_if(grid.begin(), grid.end(), [&](const AblationRow& r) { return r.name == name; });
    if (it == grid.end()) throw ConfigError("ablate.rows: unknown row " + name);
    rows.push_back(*it);
  }
  TrainConfig tc = cfg.train;
  if (cfg.ablate.epochs >= 0) tc.epochs = cfg.ablate.epochs;
  const auto results = ablate(train_shard.samples, val_shard.samples, test.samples, cfg.model, tc, cfg.eval, rows,
                              cfg.ablate.seeds, test.header.data_fingerprint());
  const nlohmann::json j = ablation_to_json(results);
  write_json(ctx.out / "ablation.json", j);
  res.artifacts.push_back("ablation.json");
  res.text = format_ablation_table(j, cfg.eval.ks);
}

void cmd_report(const RunContext& ctx, const RunConfig& cfg, CommandResult& res) {
  std::string text;
  const fs::path eval_path = ctx.out / "eval_report.json";
  const fs::path ablation_path = ctx.out / "ablation.json";
  if (!fs::exists(eval_path) && !fs::exists(ablation_path)) throw MissingInput(eval_path.string());
  if (fs::exists(eval_path)) {
    const nlohmann::json eval = read_json(eval_path);
    const fs::path bp = ctx.out / "baseline_cv.json";
    if (fs::exists(bp)) {
      const nlohmann::json baseline = read_json(bp);
      text += format_eval_table(eval, &baseline);
    } else {
      text += format_eval_table(eval, nullptr);
    }
  }
  if (fs::exists(ablation_path)) {
    if (!text.empty()) text += "\n";
    text += format_ablation_table(read_json(ablation_path), cfg.eval.ks);
  }
  write_text(ctx.out / "report.txt", text);
  res.artifacts.push_back("report.txt");
  const fs::path curves = ctx.out / "curves.json";
  if (fs::exists(curves)) {
    write_text(ctx.out / "loss_curve.svg", loss_curve_svg(read_json(curves)));
    res.artifacts.push_back("loss_curve.svg");
  }
  res.text = text;
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.model.latent_dim = 32;
  c.model.max_agents = 16;
  c.train.epochs = 30;
  c.train.batch_size = 32;
  c.train.val_limit = 64;
  c.ablate.epochs = -1;
  c.set_seed(0);
  return c;
}

void RunConfig::set_seed(uint64_t s) {
  seed = s;
  scene.seed = s;
  noise.seed = s;
  model.seed = s;
  train.seed = s;
  eval.seed = s;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"seed", "scenes", "synth", "noise", "bench", "model", "train", "eval", "ablate"}, "");
  RunConfig c = defaults();
  read_key(j, "seed", c.seed, "");
  read_key(j, "scenes", c.scenes, "");
  if (c.scenes < 3) throw ConfigError("scenes must be at least 3");
  if (j.contains("synth")) c.scene = scene_from_config(j["synth"]);
  if (j.contains("noise")) c.noise = noise_from_config(j["noise"]);
  if (j.contains("bench")) c.bench = bench_from_config(j["bench"]);
  if (j.contains("model")) {
    reject_seed(j["model"], "model");
    nlohmann::json m = c.model.to_json();
    for (const auto& [k, v] : j["model"].items()) m[k] = v;
    c.model = ModelConfig::from_json(m);
    if (j["model"].contains("history_steps") && c.model.history_steps != c.bench.history_steps) {
      throw ConfigError("model.history_steps must equal bench.history_steps");
    }
    if (j["model"].contains("future_steps") && c.model.future_steps != c.bench.future_steps) {
      throw ConfigError("model.future_steps must equal bench.future_steps");
    }
  }
  c.model.history_steps = c.bench.history_steps;
  c.model.future_steps = c.bench.future_steps;
  if (j.contains("train")) {
    reject_seed(j["train"], "train");
    nlohmann::json t = c.train.to_json();
    for (const auto& [k, v] : j["train"].items()) t[k] = v;
    c.train = TrainConfig::from_json(t);
  }
  if (j.contains("eval")) {
    reject_seed(j["eval"], "eval");
    nlohmann::json e = c.eval.to_json();
    for (const auto& [k, v] : j["eval"].items()) e[k] = v;
    c.eval = EvalConfig::from_json(e);
  }
  if (j.contains("ablate")) {
    const auto& a = j["ablate"];
    check_keys(a, {"seeds", "rows", "epochs"}, "ablate");
    read_key(a, "seeds", c.ablate.seeds, "ablate");
    read_key(a, "rows", c.ablate.rows, "ablate");
    read_key(a, "epochs", c.ablate.epochs, "ablate");
    if (c.ablate.seeds.empty() || c.ablate.rows.empty()) throw ConfigError("ablate: seeds and rows must be non-empty");
  }
  c.set_seed(c.seed);
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"scenes", scenes},
          {"synth", scene_to_config(scene)},
          {"noise", noise_to_config(noise)},
          {"bench", bench_to_config(bench)},
          {"model", strip_seed(model.to_json())},
          {"train", strip_seed(train.to_json())},
          {"eval", strip_seed(eval.to_json())},
          {"ablate", {{"seeds", ablate.seeds}, {"rows", ablate.rows}, {"epochs", ablate.epochs}}}};
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const nlohmann::json& value) {
  if (!doc.is_object()) doc = nlohmann::json::object();
  nlohmann::json* node = &doc;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("bad override key " + dotted_key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    nlohmann::json& child = (*node)[part];
    if (!child.is_object()) child = nlohmann::json::object();
    node = &child;
    start = dot + 1;
  }
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "corrupt", "build", "stats", "train", "eval", "ablate", "report"};
  return names;
}

std::string version_string() { return kVersion; }

CommandResult run_command(const std::string& command, const RunContext& ctx) {
  using Handler = void (*)(const RunContext&, const RunConfig&, CommandResult&);
  static const std::map<std::string, Handler> handlers{{"synth", cmd_synth},   {"corrupt", cmd_corrupt},
                                                       {"build", cmd_build},   {"stats", cmd_stats},
                                                       {"train", cmd_train},   {"eval", cmd_eval},
                                                       {"ablate", cmd_ablate}, {"report", cmd_report}};
  const auto it = handlers.find(command);
  if (it == handlers.end()) throw ConfigError("unknown command " + command);

  const RunConfig cfg = RunConfig::from_json(ctx.document);
  fs::create_directories(ctx.out);
  const auto start = std::chrono::steady_clock::now();
  CommandResult res;
  auto manifest = [&](const std::string& status, const std::string& error) {
    nlohmann::json m{{"command", command},
                     {"config_path", ctx.config_path},
                     {"config", cfg.to_json()},
                     {"config_fingerprint", config_fingerprint(cfg.to_json())},
                     {"overrides", ctx.overrides},
                     {"seed", cfg.seed},
                     {"artifacts", res.artifacts},
                     {"wall_clock_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                     {"threads", worker_threads()},
                     {"version", kVersion},
                     {"status", status}};
    if (!error.empty()) m["error"] = error;
    write_json(ctx.out / ("manifest_" + command + ".json"), m);
  };
  try {
    it->second(ctx, cfg, res);
  } catch (const std::exception& e) {
    manifest("failed", e.what());
    throw;
  }
  manifest("ok", "");
  return res;
}

// ---------------------------------------------------------------- reports

std::string format_eval_table(const nlohmann::json& eval, const nlohmann::json* baseline) {
  std::vector<std::string> ks;
  for (const auto& [k, _] : eval.at("metrics").items()) ks.push_back(k);
  std::sort(ks.begin(), ks.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); });
  std::ostringstream os;
  os << "Test split (" << eval.value("agents", 0) << " agents, " << eval.value("samples", 0)
     << " samples), minADE/minFDE in meters\n";
  os << pad("model", 20);
  for (const auto& k : ks) os << pad("@" + k, 14);
  os << "\n";
  auto row = [&](const std::string& name, const nlohmann::json& metrics) {
    os << pad(name, 20);
    for (const auto& k : ks) {
      if (metrics.contains(k)) {
        os << pad(fmt(metrics[k].at("minADE").get<double>()) + "/" + fmt(metrics[k].at("minFDE").get<double>()), 14);
      } else {
        os << pad("-", 14);
      }
    }
    os << "\n";
  };
  row("BiFlow", eval.at("metrics"));
  if (baseline) row("constant velocity", baseline->at("metrics"));
  return os.str();
}

std::string format_ablation_table(const nlohmann::json& ablation, const std::vector<int>& ks_in) {
  std::vector<int> ks;
  for (int k : ks_in) {
    if (k <= 10) ks.push_back(k);
  }
  if (ks.empty()) ks = ks_in;
  // Row order: the ablation grid, then anything else in file order.
  std::vector<std::string> order;
  for (const auto& r : ablation_grid()) order.push_back(r.name);
  for (const auto& r : ablation.at("rows")) {
    const std::string n = r.at("name");
    if (std::find(order.begin(), order.end(), n) == order.end()) order.push_back(n);
  }
  std::ostringstream os;
  os << "Ablation, test split, seed mean of minADE/minFDE\n";
  os << pad("row", 12) << pad("SI", 4) << pad("EA", 4) << pad("SE", 4) << pad("seeds", 7);
  for (int k : ks) os << pad("k=" + std::to_string(k), 14);
  os << "\n";
  for (const auto& name : order) {
    std::vector<const nlohmann::json*> hits;
    for (const auto& r : ablation.at("rows")) {
      if (r.at("name") == name) hits.push_back(&r);
    }
    if (hits.empty()) continue;
    const auto& first = *hits.front();
    auto flag = [](bool b) { return std::string(b ? "x" : "-"); };
    os << pad(name, 12) << pad(flag(first.at("SI")), 4) << pad(flag(first.at("EA")), 4) << pad(flag(first.at("SE")), 4)
       << pad(std::to_string(hits.size()), 7);
    for (int k : ks) {
      double ade = 0.0, fde = 0.0;
      size_t n = 0;
      for (const auto* h : hits) {
        const auto& m = h->at("report").at("metrics");
        const std::string key = std::to_string(k);
        if (!m.contains(key)) continue;
        ade += m[key].at("minADE").get<double>();
        fde += m[key].at("minFDE").get<double>();
        ++n;
      }
      os << pad(n ? fmt(ade / n) + "/" + fmt(fde / n) : "-", 14);
    }
    os << "\n";
  }
  return os.str();
}

std::string loss_curve_svg(const nlohmann::json& curves) {
  std::vector<double> loss, val;
  for (const auto& e : curves.at("epochs")) {
    loss.push_back(e.at("loss").get<double>());
    val.push_back(e.value("val_min_ade", -1.0));
  }
  const double W = 640, H = 360, M = 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  auto polyline = [&](const std::vector<double>& ys, const char* colour) {
    std::vector<std::pair<size_t, double>> pts;
    for (size_t i = 0; i < ys.size(); ++i) {
      if (std::isfinite(ys[i]) && ys[i] >= 0.0) pts.emplace_back(i, ys[i]);
    }
    if (pts.empty()) return;
    double lo = pts[0].second, hi = pts[0].second;
    for (const auto& p : pts) {
      lo = std::min(lo, p.second);
      hi = std::max(hi, p.second);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double n = static_cast<double>(std::max<size_t>(ys.size() - 1, 1));
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& [i, y] : pts) {
      os << fmt(M + (W - 2 * M) * static_cast<double>(i) / n) << "," << fmt(H - M - (H - 2 * M) * (y - lo) / (hi - lo))
         << " ";
    }
    os << "\"/>\n";
  };
  polyline(loss, "steelblue");
  polyline(val, "darkorange");
  os << "<text x=\"" << M << "\" y=\"20\" font-size=\"14\">training loss (blue), val minADE (orange), per epoch, "
        "each rescaled</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace egoflow
