#include "egoflow/bench.hpp"

#include "egoflow/hungarian.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace egoflow {

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error("unknown split '" + name + "'");
}

void BenchmarkSample::validate(const BenchConfig& config) const {
  history.validate();
  const int a = history.agents();
  if (history.steps() != config.history_steps) throw Error("sample history length mismatch");
  if (past_clean.rows() != a || past_clean.cols() != 2 * config.history_steps) {
    throw Error("sample clean past shape mismatch");
  }
  if (future_clean.rows() != a || future_clean.cols() != 2 * config.future_steps) {
    throw Error("sample clean future shape mismatch");
  }
  if (history.ego_index != a - 1) throw Error("ego must be the last row");
  if (a < 2) throw Error("sample must contain at least one non-ego agent");
  if (static_cast<int>(agent_ids.size()) != a) throw Error("agent id list length mismatch");
  if (!(norm.scale > 0.0)) throw Error("sample normalization scale must be positive");
  for (int r = 0; r + 1 < a; ++r) {
    if (history.mask.row(r).sum() < config.min_valid) {
      throw Error("non-ego agent with fewer than " + std::to_string(config.min_valid) + " valid frames");
    }
  }
  if (!past_clean.allFinite() || !future_clean.allFinite() || !history.values.allFinite()) {
    throw Error("sample contains non-finite coordinates");
  }
}

namespace {

struct Derivs {
  std::vector<std::array<int, 2>> vel_pairs;
  std::vector<std::array<int, 3>> acc_triples;
};

Derivs derivative_frames(const std::vector<int>& frames, int max_gap) {
  Derivs d;
  for (size_t i = 0; i + 1 < frames.size(); ++i) {
    if (frames[i + 1] - frames[i] <= max_gap) d.vel_pairs.push_back({frames[i], frames[i + 1]});
  }
  for (size_t i = 0; i + 1 < d.vel_pairs.size(); ++i) {
    if (d.vel_pairs[i][1] == d.vel_pairs[i + 1][0]) {
      d.acc_triples.push_back({d.vel_pairs[i][0], d.vel_pairs[i][1], d.vel_pairs[i + 1][1]});
    }
  }
  return d;
}

template <typename PosFn>
Vec2 velocity(PosFn pos, int a, int b, double dt) {
  return (pos(b) - pos(a)) * (1.0 / ((b - a) * dt));
}

template <typename PosFn>
Vec2 acceleration(PosFn pos, const std::array<int, 3>& t, double dt) {
  const Vec2 v1 = velocity(pos, t[0], t[1], dt);
  const Vec2 v2 = velocity(pos, t[1], t[2], dt);
  return (v2 - v1) * (1.0 / (0.5 * (t[2] - t[0]) * dt));
}

}  // namespace

Matrix association_cost(const std::vector<TrackObservation>& observed, const std::vector<SceneTrack>& truth,
                        const BenchConfig& config, double dt) {
  const double inf = std::numeric_limits<double>::infinity();
  Matrix cost(static_cast<Eigen::Index>(observed.size()), static_cast<Eigen::Index>(truth.size()));
  for (size_t o = 0; o < observed.size(); ++o) {
    const auto& obs = observed[o];
    for (size_t g = 0; g < truth.size(); ++g) {
      const auto& gt = truth[g];
      std::vector<int> frames;
      for (size_t f = 0; f < obs.xy.size(); ++f) {
        if (obs.valid[f] && gt.covers(static_cast<int>(f))) frames.push_back(static_cast<int>(f));
      }
      if (frames.size() < 2) {
        cost(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(g)) = inf;
        continue;
      }
      auto po = [&](int f) { return obs.xy[static_cast<size_t>(f)]; };
      auto pg = [&](int f) { return gt.at(f); };
      double pos = 0.0;
      for (int f : frames) pos += (po(f) - pg(f)).squared_norm();
      pos /= static_cast<double>(frames.size());

      const Derivs d = derivative_frames(frames, config.max_derivative_gap);
      double vel = 0.0;
      for (const auto& p : d.vel_pairs) {
        vel += (velocity(po, p[0], p[1], dt) - velocity(pg, p[0], p[1], dt)).squared_norm();
      }
      if (!d.vel_pairs.empty()) vel /= static_cast<double>(d.vel_pairs.size());
      double acc = 0.0;
      for (const auto& t : d.acc_triples) acc += (acceleration(po, t, dt) - acceleration(pg, t, dt)).squared_norm();
      if (!d.acc_triples.empty()) acc /= static_cast<double>(d.acc_triples.size());

      cost(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(g)) =
          config.weights.pos * pos + config.weights.vel * vel + config.weights.acc * acc;
    }
  }
  return cost;
}

Association match_tracks(const std::vector<TrackObservation>& observed, const std::vector<SceneTrack>& truth,
                         const BenchConfig& config, double dt) {
  const Matrix cost = association_cost(observed, truth, config, dt);
  Association out;
  out.obs_to_gt = solve_assignment(cost);
  out.total_cost = assignment_cost(cost, out.obs_to_gt);
  for (size_t o = 0; o < out.obs_to_gt.size(); ++o) {
    if (out.obs_to_gt[o] >= 0) continue;
    bool any_finite = false;
    for (Eigen::Index g = 0; g < cost.cols(); ++g) any_finite |= std::isfinite(cost(static_cast<Eigen::Index>(o), g));
    out.dropped.push_back("observed track " + std::to_string(o) +
                          (any_finite ? ": every candidate went to a cheaper track"
                                      : ": fewer than 2 valid frames overlap any ground-truth track"));
  }
  return out;
}

AlignedScene align_scene(const CleanScene& clean, const CorruptedScene& corrupted, const BenchConfig& config) {
  std::vector<TrackObservation> observed;
  observed.reserve(corrupted.tracks.size());
  for (const auto& t : corrupted.tracks) {
    observed.push_back({t.xy, apply_speed_filter(t.xy, t.visible, corrupted.dt, config.speed_limit)});
  }
  AlignedScene out;
  out.scene_id = clean.scene_id;
  out.dt = clean.dt();
  out.ego = clean.ego_track;
  out.association = match_tracks(observed, clean.tracks, config, clean.dt());

  const size_t frames = static_cast<size_t>(clean.frames());
  for (const auto& gt : clean.tracks) {
    AlignedAgent a;
    a.gt_id = gt.agent_id;
    for (size_t f = 0; f < frames; ++f) a.clean.push_back(gt.at(static_cast<int>(f)));
    a.observed.assign(frames, Vec2{});
    a.valid.assign(frames, 0);
    out.agents.push_back(std::move(a));
  }
  for (size_t o = 0; o < observed.size(); ++o) {
    const int g = out.association.obs_to_gt[o];
    if (g < 0) continue;
    auto& agent = out.agents[static_cast<size_t>(g)];
    for (size_t f = 0; f < frames && f < observed[o].xy.size(); ++f) {
      agent.observed[f] = observed[o].xy[f];
      agent.valid[f] = observed[o].valid[f];
    }
  }
  return out;
}

std::vector<BenchmarkSample> window_samples(const AlignedScene& scene, const BenchConfig& config) {
  const int tp = config.history_steps;
  const int tf = config.future_steps;
  const int frames = scene.ego.end_frame();
  std::vector<BenchmarkSample> out;
  for (int start = 0; start + tp + tf <= frames; start += config.stride) {
    std::vector<size_t> kept;
    for (size_t i = 0; i < scene.agents.size(); ++i) {
      const auto& a = scene.agents[i];
      if (static_cast<int>(a.clean.size()) < start + tp + tf) continue;  // future must be fully present
      int valid = 0;
      for (int s = 0; s < tp; ++s) valid += a.valid[static_cast<size_t>(start + s)];
      if (valid >= config.min_valid) kept.push_back(i);
    }
    if (kept.empty()) continue;

    const int rows = static_cast<int>(kept.size()) + 1;
    BenchmarkSample s;
    s.scene_id = scene.scene_id;
    s.window_start = start;
    s.history.values = Matrix::Zero(rows, 2 * tp);
    s.history.mask = Matrix::Zero(rows, tp);
    s.history.ego_index = rows - 1;
    s.past_clean = Matrix::Zero(rows, 2 * tp);
    s.future_clean = Matrix::Zero(rows, 2 * tf);
    for (int r = 0; r < rows; ++r) {
      const bool ego = r == rows - 1;
      const AlignedAgent* a = ego ? nullptr : &scene.agents[kept[static_cast<size_t>(r)]];
      auto clean_at = [&](int f) { return ego ? scene.ego.at(f) : a->clean[static_cast<size_t>(f)]; };
      s.agent_ids.push_back(ego ? scene.ego.agent_id : a->gt_id);
      for (int k = 0; k < tp; ++k) {
        const int f = start + k;
        set_point(s.past_clean, r, k, clean_at(f));
        const bool valid = ego || a->valid[static_cast<size_t>(f)];
        s.history.mask(r, k) = valid ? 1.0 : 0.0;
        if (valid) set_point(s.history.values, r, k, ego ? clean_at(f) : a->observed[static_cast<size_t>(f)]);
      }
      for (int k = 0; k < tf; ++k) set_point(s.future_clean, r, k, clean_at(start + tp + k));
    }
    fill_invisible(s.history.values, s.history.mask);
    out.push_back(std::move(s));
  }
  return out;
}

void split_chronological(std::vector<BenchmarkSample>& samples, const BenchConfig& config) {
  std::map<int, size_t> per_scene;
  for (const auto& s : samples) ++per_scene[s.scene_id];
  if (per_scene.size() < 3) {
    throw Error("chronological split needs at least 3 scenes, got " + std::to_string(per_scene.size()));
  }
  std::vector<int> ids;
  std::vector<double> cum{0.0};
  for (const auto& [id, count] : per_scene) {
    ids.push_back(id);
    cum.push_back(cum.back() + static_cast<double>(count));
  }
  const double total = cum.back();
  const int n = static_cast<int>(ids.size());
  // cum[b] = samples in the first b scenes.
  auto closest = [&](int lo, int hi, double target) {
    int best = lo;
    for (int b = lo; b <= hi; ++b) {
      if (std::abs(cum[static_cast<size_t>(b)] / total - target) <
          std::abs(cum[static_cast<size_t>(best)] / total - target)) {
        best = b;
      }
    }
    return best;
  };
  const int train_end = closest(1, n - 2, config.train_fraction);
  const int val_end = closest(train_end + 1, n - 1, config.train_fraction + config.val_fraction);
  std::map<int, Split> tag;
  for (int i = 0; i < n; ++i) {
    tag[ids[static_cast<size_t>(i)]] = i < train_end ? Split::train : (i < val_end ? Split::val : Split::test);
  }
  for (auto& s : samples) s.split = tag.at(s.scene_id);
}

double normalization_scale(const std::vector<BenchmarkSample>& samples) {
  double sum = 0.0;
  double sum_sq = 0.0;
  double count = 0.0;
  for (const auto& s : samples) {
    if (s.split != Split::train) continue;
    const Vec2 origin = point(s.history.values, s.history.ego_index, s.history.steps() - 1);
    for (const Matrix* m : {&s.past_clean, &s.future_clean}) {
      for (Eigen::Index r = 0; r < m->rows(); ++r) {
        for (Eigen::Index c = 0; c < m->cols(); c += 2) {
          const double x = (*m)(r, c) - origin.x;
          const double y = (*m)(r, c + 1) - origin.y;
          sum += x + y;
          sum_sq += x * x + y * y;
          count += 2.0;
        }
      }
    }
  }
  if (count < 2.0) throw Error("no training coordinates to derive a normalization scale");
  const double mean = sum / count;
  const double var = sum_sq / count - mean * mean;
  if (!(var > 0.0)) throw Error("degenerate training coordinates (zero variance)");
  return std::sqrt(var);
}

void assign_norm(std::vector<BenchmarkSample>& samples, double scale) {
  for (auto& s : samples) s.norm = ego_norm_record(s.history, scale);
}

BenchStats bench_stats(const std::vector<BenchmarkSample>& samples) {
  BenchStats st;
  st.samples = samples.size();
  std::set<int> scenes;
  double hidden = 0.0;
  double frames = 0.0;
  double sq = 0.0;
  for (const auto& s : samples) {
    scenes.insert(s.scene_id);
    for (int r = 0; r < s.agents(); ++r) {
      if (r == s.history.ego_index) continue;
      ++st.agents;
      for (int k = 0; k < s.history.steps(); ++k) {
        hidden += 1.0 - s.history.mask(r, k);
        frames += 1.0;
        sq += (point(s.history.values, r, k) - point(s.past_clean, r, k)).squared_norm();
      }
    }
  }
  st.scenes = scenes.size();
  if (frames > 0) {
    st.noisy_rate = hidden / frames;
    st.history_mse = sq / frames;
  }
  return st;
}

nlohmann::json stats_to_json(const BenchStats& stats) {
  return {{"samples", stats.samples},
          {"scenes", stats.scenes},
          {"agents", stats.agents},
          {"noisy_rate", stats.noisy_rate},
          {"history_mse", stats.history_mse}};
}

std::string ShardHeader::data_fingerprint() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "tp=%d;tf=%d;dt=%.17g;scale=%.17g", history_steps, future_steps, dt, scale);
  return buf;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<size_t>(r)].size()) != cols) throw Error("ragged matrix in record");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
  }
  return m;
}

void write_record(std::ofstream& out, const std::string& bytes) {
  const auto n = static_cast<uint32_t>(bytes.size());
  const unsigned char len[4] = {static_cast<unsigned char>(n & 0xff), static_cast<unsigned char>((n >> 8) & 0xff),
                                static_cast<unsigned char>((n >> 16) & 0xff),
                                static_cast<unsigned char>((n >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(len), 4);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

bool read_record(std::ifstream& in, std::string& bytes) {
  unsigned char len[4];
  if (!in.read(reinterpret_cast<char*>(len), 4)) return false;
  const uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) | (static_cast<uint32_t>(len[3]) << 24);
  bytes.resize(n);
  if (!in.read(bytes.data(), n)) throw Error("truncated shard record");
  return true;
}

}  // namespace

nlohmann::json sample_to_json(const BenchmarkSample& s) {
  return {{"scene_id", s.scene_id},
          {"window_start", s.window_start},
          {"split", split_name(s.split)},
          {"agent_ids", s.agent_ids},
          {"ego_index", s.history.ego_index},
          {"history", matrix_to_json(s.history.values)},
          {"mask", matrix_to_json(s.history.mask)},
          {"past_clean", matrix_to_json(s.past_clean)},
          {"future_clean", matrix_to_json(s.future_clean)},
          {"norm", {{"origin", {s.norm.origin.x, s.norm.origin.y}}, {"scale", s.norm.scale}}}};
}

BenchmarkSample sample_from_json(const nlohmann::json& j) {
  BenchmarkSample s;
  s.scene_id = j.at("scene_id").get<int>();
  s.window_start = j.at("window_start").get<int>();
  s.split = split_from_name(j.at("split").get<std::string>());
  s.agent_ids = j.at("agent_ids").get<std::vector<int>>();
  s.history.ego_index = j.at("ego_index").get<int>();
  s.history.values = matrix_from_json(j.at("history"));
  s.history.mask = matrix_from_json(j.at("mask"));
  s.past_clean = matrix_from_json(j.at("past_clean"));
  s.future_clean = matrix_from_json(j.at("future_clean"));
  const auto& n = j.at("norm");
  s.norm.origin = {n.at("origin").at(0).get<double>(), n.at("origin").at(1).get<double>()};
  s.norm.scale = n.at("scale").get<double>();
  return s;
}

void write_shard(const std::filesystem::path& path, const ShardHeader& header,
                 const std::vector<BenchmarkSample>& samples, const BenchConfig& config) {
  if (header.count != samples.size()) throw Error("shard header count does not match the sample list");
  for (const auto& s : samples) s.validate(config);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open shard for writing: " + path.string());
  const nlohmann::json h = {{"version", header.version}, {"T_p", header.history_steps},
                            {"T_f", header.future_steps}, {"dt", header.dt},
                            {"scale", header.scale},     {"count", header.count}};
  write_record(out, h.dump());
  for (const auto& s : samples) write_record(out, sample_to_json(s).dump());
  if (!out) throw Error("failed writing shard " + path.string());
}

std::vector<BenchmarkSample> read_shard(const std::filesystem::path& path, ShardHeader* header,
                                        const BenchConfig& config) {
  if (!std::filesystem::exists(path)) throw MissingInput(path.string());
  std::ifstream in(path, std::ios::binary);
  std::string bytes;
  if (!read_record(in, bytes)) throw Error("empty shard " + path.string());
  const auto h = nlohmann::json::parse(bytes);
  ShardHeader hdr;
  hdr.version = h.at("version").get<int>();
  hdr.history_steps = h.at("T_p").get<int>();
  hdr.future_steps = h.at("T_f").get<int>();
  hdr.dt = h.at("dt").get<double>();
  hdr.scale = h.at("scale").get<double>();
  hdr.count = h.at("count").get<size_t>();
  if (hdr.version != 1) throw Error("unsupported shard version " + std::to_string(hdr.version));
  BenchConfig cfg = config;
  cfg.history_steps = hdr.history_steps;
  cfg.future_steps = hdr.future_steps;
  std::vector<BenchmarkSample> samples;
  samples.reserve(hdr.count);
  while (read_record(in, bytes)) {
    samples.push_back(sample_from_json(nlohmann::json::parse(bytes)));
    samples.back().validate(cfg);
  }
  if (samples.size() != hdr.count) throw Error("shard record count does not match its header");
  if (header) *header = hdr;
  return samples;
}

}  // namespace egoflow
