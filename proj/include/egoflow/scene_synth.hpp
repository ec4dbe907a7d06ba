#pragma once

// Clean multi-agent pedestrian scenes with a moving ego observer.

#include "egoflow/traj.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace egoflow {

enum class Behavior { crossing, following, pass_by, static_avoid };

struct BehaviorMix {
  double crossing = 0.4;
  double following = 0.2;
  double pass_by = 0.3;
  double static_avoid = 0.1;
};

struct Arena {
  double width = 24.0;  // x in [-width/2, width/2]
  double height = 14.0;  // y in [-height/2, height/2]
};

struct SceneSpec {
  int n_agents = 6;  // including the ego
  int duration_frames = 40;
  double dt = 0.4;
  Arena arena;
  BehaviorMix behavior_mix;
  uint64_t seed = 0;

  void validate() const;
};

struct CleanScene {
  int scene_id = 0;
  std::vector<SceneTrack> tracks;  // pedestrians, ids 1..n_agents-1
  SceneTrack ego_track;            // id 0
  std::vector<Vec2> obstacles;
  SceneSpec spec;

  int frames() const { return spec.duration_frames; }
  double dt() const { return spec.dt; }
};

struct SocialParams {
  double relaxation = 0.5;     // s, goal-velocity relaxation time
  double repulsion = 2.0;      // m/s^2 at contact
  double decay = 0.4;          // m, exponential decay length
  double range = 2.0;          // m, interaction cutoff
  double sidestep = 0.6;       // tangential share of the repulsion (pass on the right)
  double obstacle_repulsion = 3.0;
  double max_speed = 2.5;      // m/s
  double arrive_radius = 0.5;  // m, desired speed ramps to 0 inside it
};

struct SocialState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
};

// One symplectic-Euler step of the social-force model: velocities are
// updated from goal attraction plus pairwise and obstacle repulsion, clamped
// to max_speed, then positions advance with the new velocities.
SocialState social_step(const SocialState& state, std::span<const Vec2> goals,
                        std::span<const double> desired_speeds, std::span<const Vec2> obstacles,
                        double dt, const SocialParams& params = {});

CleanScene generate_scene(const SceneSpec& spec, int scene_id = 0);

// All positions of the scene at one frame, pedestrians first, ego last.
std::vector<Vec2> frame_positions(const CleanScene& scene, int frame);

double min_pairwise_distance(const CleanScene& scene, bool include_ego = true);

nlohmann::json scene_to_json(const CleanScene& scene);
CleanScene scene_from_json(const nlohmann::json& j);

}  // namespace egoflow
