#include "egoflow/scene_synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <limits>
#include <numbers>

namespace egoflow {

namespace {

constexpr int kSubsteps = 4;
constexpr double kCrossingDistance = 0.8;
constexpr int kMaxAttempts = 64;

struct AgentPlan {
  Behavior behavior = Behavior::following;
  Vec2 start;
  Vec2 goal;
  double speed = 1.0;
};

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Behavior draw_behavior(Rng& rng, const BehaviorMix& mix) {
  const std::array<double, 4> w{mix.crossing, mix.following, mix.pass_by, mix.static_avoid};
  std::discrete_distribution<int> d(w.begin(), w.end());
  return static_cast<Behavior>(d(rng));
}

Vec2 clamp_to(const Arena& arena, Vec2 p) {
  return {std::clamp(p.x, -arena.width / 2, arena.width / 2),
          std::clamp(p.y, -arena.height / 2, arena.height / 2)};
}

bool far_from(const std::vector<AgentPlan>& plans, Vec2 p, double min_dist) {
  return std::all_of(plans.begin(), plans.end(),
                     [&](const AgentPlan& a) { return (a.start - p).norm() >= min_dist; });
}

struct Layout {
  std::vector<AgentPlan> plans;  // pedestrians then ego
  std::vector<Vec2> obstacles;
};

// Places every agent relative to the ego's path so that most of the scene
// happens in front of the observer.
Layout plan_scene(const SceneSpec& spec, Rng& rng) {
  const Arena& arena = spec.arena;
  const double duration = spec.duration_frames * spec.dt;
  Layout layout;

  AgentPlan ego;
  ego.behavior = Behavior::following;
  ego.speed = uniform(rng, 0.9, 1.2);
  const double ego_y = uniform(rng, -1.0, 1.0);
  ego.start = {-arena.width / 2 + 1.0, ego_y};
  ego.goal = {arena.width / 2 - 0.5, ego_y + uniform(rng, -1.0, 1.0)};

  const int n_peds = spec.n_agents - 1;
  std::vector<Behavior> behaviors(static_cast<size_t>(n_peds));
  for (auto& b : behaviors) b = draw_behavior(rng, spec.behavior_mix);
  const bool want_crossing = spec.behavior_mix.crossing > 0.0 && n_peds >= 2;
  if (want_crossing) {
    behaviors[0] = Behavior::crossing;
    behaviors[1] = Behavior::crossing;
  }

  const bool all_static = std::all_of(behaviors.begin(), behaviors.end(),
                                      [](Behavior b) { return b == Behavior::static_avoid; });
  int lane = 0;
  std::vector<AgentPlan>& plans = layout.plans;
  for (int i = 0; i < n_peds; ++i) {
    AgentPlan p;
    p.behavior = behaviors[static_cast<size_t>(i)];
    for (int tries = 0; tries < 200; ++tries) {
      switch (p.behavior) {
        case Behavior::crossing: {
          p.speed = uniform(rng, 1.0, 1.4);
          Vec2 meet;
          double meet_time;
          if (want_crossing && i == 1) {
            // Partner of agent 0: same meeting point and time, roughly perpendicular path.
            const AgentPlan& first = plans[0];
            const Vec2 dir0 = (first.goal - first.start) * (1.0 / (first.goal - first.start).norm());
            meet_time = uniform(rng, 0.3, 0.6) * duration;
            meet = first.start + dir0 * (first.speed * meet_time);
            const double angle = std::atan2(dir0.y, dir0.x) + uniform(rng, 0.35, 0.65) * std::numbers::pi *
                                                                   (uniform(rng, 0, 1) < 0.5 ? 1 : -1);
            const Vec2 dir{std::cos(angle), std::sin(angle)};
            p.start = meet - dir * (p.speed * meet_time);
            p.goal = meet + dir * (p.speed * (duration - meet_time) + 2.0);
            break;
          }
          meet_time = uniform(rng, 0.3, 0.6) * duration;
          meet = {ego.start.x + uniform(rng, 5.0, 14.0), ego_y + uniform(rng, -2.5, 2.5)};
          const double side = uniform(rng, 0, 1) < 0.5 ? 1.0 : -1.0;
          const double angle = side * uniform(rng, 0.35, 0.65) * std::numbers::pi;
          const Vec2 dir{std::cos(angle), std::sin(angle)};
          p.start = meet - dir * (p.speed * meet_time);
          p.goal = meet + dir * (p.speed * (duration - meet_time) + 2.0);
          break;
        }
        case Behavior::following: {
          p.speed = uniform(rng, 0.6, 0.9) * ego.speed;
          p.start = {ego.start.x + uniform(rng, 2.5, 7.0), ego_y + uniform(rng, -1.5, 1.5)};
          p.goal = {arena.width / 2 + 4.0, p.start.y + uniform(rng, -1.0, 1.0)};
          break;
        }
        case Behavior::pass_by: {
          p.speed = uniform(rng, 0.9, 1.4);
          const double side = uniform(rng, 0, 1) < 0.5 ? 1.0 : -1.0;
          p.start = {ego.start.x + uniform(rng, 9.0, 18.0), ego_y + side * uniform(rng, 0.8, 2.5)};
          p.goal = {-arena.width / 2 - 4.0, p.start.y + side * uniform(rng, 0.0, 1.0)};
          break;
        }
        case Behavior::static_avoid: {
          // Parallel lanes, each with an obstacle on it.
          ++lane;
          const double side = (lane % 2 == 1) ? 1.0 : -1.0;
          const double offset = side * 1.6 * ((lane + 1) / 2);
          p.speed = uniform(rng, 0.8, 1.1);
          const bool with_ego = all_static || uniform(rng, 0, 1) < 0.5;
          p.start = {with_ego ? ego.start.x + uniform(rng, 0.5, 3.0) : arena.width / 2 - 1.0, ego_y + offset};
          p.goal = {with_ego ? arena.width / 2 + 4.0 : -arena.width / 2 - 4.0, ego_y + offset};
          layout.obstacles.push_back({uniform(rng, -arena.width / 4, arena.width / 4), ego_y + offset});
          break;
        }
      }
      p.start = clamp_to(arena, p.start);
      if (far_from(plans, p.start, 1.0) && (p.start - ego.start).norm() >= 1.0) break;
      if (p.behavior == Behavior::static_avoid) {
        --lane;
        layout.obstacles.pop_back();
      }
    }
    plans.push_back(p);
  }
  plans.push_back(ego);
  return layout;
}

CleanScene simulate(const SceneSpec& spec, const Layout& layout, int scene_id) {
  const auto& plans = layout.plans;
  const size_t n = plans.size();
  SocialState state;
  std::vector<Vec2> goals(n);
  std::vector<double> speeds(n);
  for (size_t i = 0; i < n; ++i) {
    state.positions.push_back(plans[i].start);
    const Vec2 d = plans[i].goal - plans[i].start;
    const double len = d.norm();
    state.velocities.push_back(len > 0 ? d * (plans[i].speed / len) : Vec2{});
    goals[i] = plans[i].goal;
    speeds[i] = plans[i].speed;
  }

  CleanScene scene;
  scene.scene_id = scene_id;
  scene.spec = spec;
  scene.obstacles = layout.obstacles;
  std::vector<SceneTrack> tracks(n);
  for (size_t i = 0; i < n; ++i) {
    tracks[i].agent_id = i + 1 == n ? 0 : static_cast<int>(i) + 1;
    tracks[i].dt = spec.dt;
    tracks[i].t0 = 0;
    tracks[i].positions.reserve(static_cast<size_t>(spec.duration_frames));
  }
  const double h = spec.dt / kSubsteps;
  for (int f = 0; f < spec.duration_frames; ++f) {
    for (size_t i = 0; i < n; ++i) tracks[i].positions.push_back(state.positions[i]);
    for (int s = 0; s < kSubsteps; ++s) {
      state = social_step(state, goals, speeds, layout.obstacles, h);
    }
  }
  scene.ego_track = tracks.back();
  tracks.pop_back();
  scene.tracks = std::move(tracks);
  return scene;
}

double min_distance(const CleanScene& scene, size_t a, size_t b) {
  double best = std::numeric_limits<double>::infinity();
  for (int f = 0; f < scene.frames(); ++f) {
    best = std::min(best, (scene.tracks[a].at(f) - scene.tracks[b].at(f)).norm());
  }
  return best;
}

bool has_crossing(const CleanScene& scene) {
  for (size_t a = 0; a < scene.tracks.size(); ++a) {
    for (size_t b = a + 1; b < scene.tracks.size(); ++b) {
      if (min_distance(scene, a, b) < kCrossingDistance) return true;
    }
  }
  return false;
}

}  // namespace

void SceneSpec::validate() const {
  if (n_agents < 2) throw Error("scene needs the ego plus at least one pedestrian");
  if (duration_frames < 20) throw Error("scene must span at least one 8+12 window (20 frames)");
  if (!(dt > 0.0)) throw Error("dt must be positive");
  const auto& m = behavior_mix;
  if (m.crossing < 0 || m.following < 0 || m.pass_by < 0 || m.static_avoid < 0 ||
      m.crossing + m.following + m.pass_by + m.static_avoid <= 0) {
    throw Error("behavior mix must be non-negative with positive mass");
  }
  if (arena.width < 10.0 || arena.height < 4.0 || arena.width * arena.height < 6.0 * n_agents) {
    throw Error("arena " + std::to_string(arena.width) + "x" + std::to_string(arena.height) +
                " m is too small for " + std::to_string(n_agents) + " agents (need >= 6 m^2 each, width >= 10 m, "
                "height >= 4 m)");
  }
}

SocialState social_step(const SocialState& state, std::span<const Vec2> goals,
                        std::span<const double> desired_speeds, std::span<const Vec2> obstacles,
                        double dt, const SocialParams& params) {
  const size_t n = state.positions.size();
  SocialState next = state;
  for (size_t i = 0; i < n; ++i) {
    const Vec2 p = state.positions[i];
    const Vec2 v = state.velocities[i];
    const Vec2 to_goal = goals[i] - p;
    const double dist = to_goal.norm();
    Vec2 desired{};
    if (dist > 1e-9) {
      const double speed = desired_speeds[i] * std::min(1.0, dist / params.arrive_radius);
      desired = to_goal * (speed / dist);
    }
    Vec2 force = (desired - v) * (1.0 / params.relaxation);

    auto repel = [&](Vec2 other, double strength, bool sidestep) {
      const Vec2 d = p - other;
      const double r = d.norm();
      if (r >= params.range || r < 1e-9) return;
      const Vec2 nrm = d * (1.0 / r);
      const double mag = strength * std::exp(-r / params.decay);
      force += nrm * mag;
      if (sidestep) force += Vec2{-nrm.y, nrm.x} * (mag * params.sidestep);
    };
    for (size_t j = 0; j < n; ++j) {
      if (j != i) repel(state.positions[j], params.repulsion, true);
    }
    for (const Vec2& o : obstacles) repel(o, params.obstacle_repulsion, true);

    Vec2 nv = v + force * dt;
    const double speed = nv.norm();
    if (speed > params.max_speed) nv = nv * (params.max_speed / speed);
    next.velocities[i] = nv;
    next.positions[i] = p + nv * dt;
  }
  return next;
}

CleanScene generate_scene(const SceneSpec& spec, int scene_id) {
  spec.validate();
  const bool need_crossing = spec.behavior_mix.crossing > 0.0 && spec.n_agents >= 3;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = derive_rng(spec.seed, 0x5ce7e, scene_id, attempt);
    CleanScene scene = simulate(spec, plan_scene(spec, rng), scene_id);
    if (!need_crossing || has_crossing(scene)) return scene;
  }
  throw Error("could not produce a crossing event within " + std::to_string(kMaxAttempts) +
              " attempts; enlarge duration_frames or arena");
}

std::vector<Vec2> frame_positions(const CleanScene& scene, int frame) {
  std::vector<Vec2> out;
  out.reserve(scene.tracks.size() + 1);
  for (const auto& t : scene.tracks) out.push_back(t.at(frame));
  out.push_back(scene.ego_track.at(frame));
  return out;
}

double min_pairwise_distance(const CleanScene& scene, bool include_ego) {
  double best = std::numeric_limits<double>::infinity();
  for (int f = 0; f < scene.frames(); ++f) {
    auto pos = frame_positions(scene, f);
    if (!include_ego) pos.pop_back();
    for (size_t a = 0; a < pos.size(); ++a) {
      for (size_t b = a + 1; b < pos.size(); ++b) best = std::min(best, (pos[a] - pos[b]).norm());
    }
  }
  return best;
}

namespace {

nlohmann::json track_to_json(const SceneTrack& t) {
  nlohmann::json xy = nlohmann::json::array();
  for (const auto& p : t.positions) xy.push_back({p.x, p.y});
  return {{"id", t.agent_id}, {"t0", t.t0}, {"xy", std::move(xy)}};
}

SceneTrack track_from_json(const nlohmann::json& j, double dt) {
  SceneTrack t;
  t.agent_id = j.at("id").get<int>();
  t.t0 = j.at("t0").get<int>();
  t.dt = dt;
  for (const auto& p : j.at("xy")) t.positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  t.validate();
  return t;
}

}  // namespace

nlohmann::json scene_to_json(const CleanScene& scene) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& t : scene.tracks) agents.push_back(track_to_json(t));
  agents.push_back(track_to_json(scene.ego_track));
  return {{"scene_id", scene.scene_id},
          {"dt", scene.dt()},
          {"agents", std::move(agents)},
          {"ego_id", scene.ego_track.agent_id}};
}

CleanScene scene_from_json(const nlohmann::json& j) {
  CleanScene scene;
  scene.scene_id = j.at("scene_id").get<int>();
  const double dt = j.at("dt").get<double>();
  const int ego_id = j.at("ego_id").get<int>();
  bool have_ego = false;
  int frames = 0;
  for (const auto& a : j.at("agents")) {
    SceneTrack t = track_from_json(a, dt);
    frames = std::max(frames, t.end_frame());
    if (t.agent_id == ego_id) {
      scene.ego_track = std::move(t);
      have_ego = true;
    } else {
      scene.tracks.push_back(std::move(t));
    }
  }
  if (!have_ego) throw Error("scene record has no ego track");
  scene.spec.dt = dt;
  scene.spec.duration_frames = frames;
  scene.spec.n_agents = static_cast<int>(scene.tracks.size()) + 1;
  return scene;
}

}  // namespace egoflow
