#include "egoflow/ego_noise.hpp"

#include <json.hpp>

#include <algorithm>
#include <numbers>

namespace egoflow {

namespace {

double segment_distance(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  double s = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return (a + ab * s - p).norm();
}

enum class Hidden : uint8_t { no, fov, occluded };

std::vector<Hidden> hidden_reasons(const CleanScene& scene, int frame, const NoiseProfile& profile) {
  const Vec2 ego = scene.ego_track.at(frame);
  const Vec2 heading = ego_heading(scene.ego_track, frame);
  const double half_fov = profile.fov_deg * std::numbers::pi / 360.0;
  const size_t n = scene.tracks.size();
  std::vector<Vec2> pos(n);
  std::vector<double> range(n);
  for (size_t i = 0; i < n; ++i) {
    pos[i] = scene.tracks[i].at(frame);
    range[i] = (pos[i] - ego).norm();
  }
  std::vector<Hidden> out(n, Hidden::no);
  for (size_t i = 0; i < n; ++i) {
    if (profile.fov_deg < 360.0 && range[i] > 1e-9) {
      const Vec2 d = pos[i] - ego;
      const double cosang = std::clamp(d.dot(heading) / range[i], -1.0, 1.0);
      if (std::acos(cosang) > half_fov) {
        out[i] = Hidden::fov;
        continue;
      }
    }
    for (size_t j = 0; j < n; ++j) {
      if (j == i || range[j] >= range[i]) continue;
      if (segment_distance(ego, pos[i], pos[j]) < profile.occlusion_radius) {
        out[i] = Hidden::occluded;
        break;
      }
    }
  }
  return out;
}

}  // namespace

void NoiseProfile::validate() const {
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) throw Error("fov_deg must lie in (0, 360]");
  if (occlusion_radius < 0 || id_switch_dist < 0 || base_sigma < 0 || range_sigma_per_m < 0 || drift_sigma < 0) {
    throw Error("noise profile magnitudes must be non-negative");
  }
}

NoiseProfile NoiseProfile::identity() {
  NoiseProfile p;
  p.fov_deg = 360.0;
  p.occlusion_radius = 0.0;
  p.id_switch_dist = 0.0;
  p.base_sigma = 0.0;
  p.range_sigma_per_m = 0.0;
  p.drift_sigma = 0.0;
  return p;
}

double CorruptionReport::invisible_rate() const {
  if (agents.empty() || frames == 0) return 0.0;
  double hidden = 0.0;
  for (const auto& a : agents) hidden += a.occluded_frames + a.out_of_fov_frames;
  return hidden / (static_cast<double>(agents.size()) * frames);
}

Vec2 ego_heading(const SceneTrack& ego, int frame) {
  const int first = ego.t0;
  const int last = ego.end_frame() - 1;
  for (int f = frame; f < last; ++f) {
    const Vec2 d = ego.at(f + 1) - ego.at(f);
    if (d.norm() > 1e-9) return d * (1.0 / d.norm());
  }
  for (int f = std::min(frame, last); f > first; --f) {
    const Vec2 d = ego.at(f) - ego.at(f - 1);
    if (d.norm() > 1e-9) return d * (1.0 / d.norm());
  }
  return {1.0, 0.0};
}

std::vector<uint8_t> visibility(const CleanScene& scene, int frame, const NoiseProfile& profile) {
  const auto reasons = hidden_reasons(scene, frame, profile);
  std::vector<uint8_t> out;
  out.reserve(reasons.size() + 1);
  for (Hidden h : reasons) out.push_back(h == Hidden::no ? 1 : 0);
  out.push_back(1);
  return out;
}

std::pair<CorruptedScene, CorruptionReport> corrupt_scene(const CleanScene& scene,
                                                          const NoiseProfile& profile) {
  profile.validate();
  const int frames = scene.frames();
  const size_t n = scene.tracks.size();
  Rng rng = derive_rng(profile.seed, 0xc0442, scene.scene_id);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  CorruptedScene out;
  out.scene_id = scene.scene_id;
  out.dt = scene.dt();
  out.ego_track = scene.ego_track;
  out.tracks.resize(n);
  for (size_t k = 0; k < n; ++k) {
    out.tracks[k].obs_id = 1000 + static_cast<int>(k);
    out.tracks[k].xy.assign(static_cast<size_t>(frames), Vec2{});
    out.tracks[k].visible.assign(static_cast<size_t>(frames), 0);
  }

  CorruptionReport report;
  report.scene_id = scene.scene_id;
  report.frames = frames;
  report.agents.resize(n);
  std::vector<double> error_sum(n, 0.0);
  std::vector<int> visible_count(n, 0);
  for (size_t i = 0; i < n; ++i) report.agents[i].agent_id = scene.tracks[i].agent_id;

  std::vector<size_t> obs_of(n);  // gt track index -> observed track index
  for (size_t i = 0; i < n; ++i) obs_of[i] = i;
  std::vector<uint8_t> close_prev(n * n, 0);
  Vec2 drift{};

  for (int f = 0; f < frames; ++f) {
    if (f > 0) drift += Vec2{normal(rng), normal(rng)} * profile.drift_sigma;
    const auto reasons = hidden_reasons(scene, f, profile);
    const Vec2 ego = scene.ego_track.at(f);

    // Identity swaps at the onset of a close approach between two visible agents.
    for (size_t a = 0; a < n; ++a) {
      for (size_t b = a + 1; b < n; ++b) {
        const bool close = reasons[a] == Hidden::no && reasons[b] == Hidden::no &&
                           (scene.tracks[a].at(f) - scene.tracks[b].at(f)).norm() < profile.id_switch_dist;
        if (close && !close_prev[a * n + b] && coin(rng) < 0.5) {
          std::swap(obs_of[a], obs_of[b]);
          ++report.agents[a].id_switches;
          ++report.agents[b].id_switches;
        }
        close_prev[a * n + b] = close ? 1 : 0;
      }
    }

    for (size_t i = 0; i < n; ++i) {
      const Vec2 clean = scene.tracks[i].at(f);
      const double sigma = profile.base_sigma + profile.range_sigma_per_m * (clean - ego).norm();
      const Vec2 noise{normal(rng) * sigma, normal(rng) * sigma};
      ObservedTrack& track = out.tracks[obs_of[i]];
      switch (reasons[i]) {
        case Hidden::fov:
          ++report.agents[i].out_of_fov_frames;
          break;
        case Hidden::occluded:
          ++report.agents[i].occluded_frames;
          break;
        case Hidden::no: {
          const Vec2 observed = clean + drift + noise;
          track.xy[static_cast<size_t>(f)] = observed;
          track.visible[static_cast<size_t>(f)] = 1;
          error_sum[i] += (observed - clean).norm();
          ++visible_count[i];
          break;
        }
      }
    }
  }

  for (size_t i = 0; i < n; ++i) {
    report.agents[i].mean_error = visible_count[i] > 0 ? error_sum[i] / visible_count[i] : 0.0;
  }
  // Interpolate hidden frames so every stored coordinate is finite.
  for (auto& track : out.tracks) {
    Matrix values(1, 2 * frames);
    Matrix mask(1, frames);
    for (int f = 0; f < frames; ++f) {
      set_point(values, 0, f, track.xy[static_cast<size_t>(f)]);
      mask(0, f) = track.visible[static_cast<size_t>(f)];
    }
    fill_invisible(values, mask);
    for (int f = 0; f < frames; ++f) track.xy[static_cast<size_t>(f)] = point(values, 0, f);
  }
  return {std::move(out), std::move(report)};
}

std::vector<uint8_t> apply_speed_filter(std::span<const Vec2> positions, std::span<const uint8_t> visible,
                                        double dt, double limit) {
  std::vector<uint8_t> valid(positions.size(), 0);
  int last = -1;
  for (size_t f = 0; f < positions.size(); ++f) {
    if (!visible[f]) continue;
    if (last >= 0) {
      const double elapsed = (static_cast<double>(f) - last) * dt;
      const double speed = (positions[f] - positions[static_cast<size_t>(last)]).norm() / elapsed;
      if (speed >= limit) continue;
    }
    valid[f] = 1;
    last = static_cast<int>(f);
  }
  return valid;
}

ObservedHistory observed_window(const CorruptedScene& scene, int start, int steps) {
  const int a = static_cast<int>(scene.tracks.size()) + 1;
  ObservedHistory h;
  h.values = Matrix::Zero(a, 2 * steps);
  h.mask = Matrix::Zero(a, steps);
  h.ego_index = a - 1;
  for (int r = 0; r + 1 < a; ++r) {
    const auto& t = scene.tracks[static_cast<size_t>(r)];
    for (int s = 0; s < steps; ++s) {
      set_point(h.values, r, s, t.xy.at(static_cast<size_t>(start + s)));
      h.mask(r, s) = t.visible.at(static_cast<size_t>(start + s));
    }
  }
  for (int s = 0; s < steps; ++s) {
    set_point(h.values, a - 1, s, scene.ego_track.at(start + s));
    h.mask(a - 1, s) = 1.0;
  }
  fill_invisible(h.values, h.mask);
  return h;
}

nlohmann::json corrupted_to_json(const CorruptedScene& scene) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& t : scene.tracks) {
    nlohmann::json xy = nlohmann::json::array();
    for (const auto& p : t.xy) xy.push_back({p.x, p.y});
    agents.push_back({{"id", t.obs_id}, {"t0", 0}, {"xy", std::move(xy)}, {"mask", t.visible}});
  }
  nlohmann::json ego_xy = nlohmann::json::array();
  for (const auto& p : scene.ego_track.positions) ego_xy.push_back({p.x, p.y});
  agents.push_back({{"id", scene.ego_track.agent_id},
                    {"t0", scene.ego_track.t0},
                    {"xy", std::move(ego_xy)},
                    {"mask", std::vector<uint8_t>(scene.ego_track.positions.size(), 1)}});
  return {{"scene_id", scene.scene_id},
          {"dt", scene.dt},
          {"agents", std::move(agents)},
          {"ego_id", scene.ego_track.agent_id}};
}

CorruptedScene corrupted_from_json(const nlohmann::json& j) {
  CorruptedScene scene;
  scene.scene_id = j.at("scene_id").get<int>();
  scene.dt = j.at("dt").get<double>();
  const int ego_id = j.at("ego_id").get<int>();
  bool have_ego = false;
  for (const auto& a : j.at("agents")) {
    std::vector<Vec2> xy;
    for (const auto& p : a.at("xy")) xy.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (a.at("id").get<int>() == ego_id) {
      scene.ego_track.agent_id = ego_id;
      scene.ego_track.t0 = a.at("t0").get<int>();
      scene.ego_track.dt = scene.dt;
      scene.ego_track.positions = std::move(xy);
      scene.ego_track.validate();
      have_ego = true;
      continue;
    }
    ObservedTrack t;
    t.obs_id = a.at("id").get<int>();
    t.xy = std::move(xy);
    t.visible = a.at("mask").get<std::vector<uint8_t>>();
    if (t.visible.size() != t.xy.size()) throw Error("observed track mask length mismatch");
    scene.tracks.push_back(std::move(t));
  }
  if (!have_ego) throw Error("corrupted scene record has no ego track");
  return scene;
}

nlohmann::json report_to_json(const CorruptionReport& report) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : report.agents) {
    agents.push_back({{"agent_id", a.agent_id},
                      {"occluded_frames", a.occluded_frames},
                      {"out_of_fov_frames", a.out_of_fov_frames},
                      {"id_switches", a.id_switches},
                      {"mean_error", a.mean_error}});
  }
  return {{"scene_id", report.scene_id},
          {"frames", report.frames},
          {"invisible_rate", report.invisible_rate()},
          {"agents", std::move(agents)}};
}

}  // namespace egoflow
