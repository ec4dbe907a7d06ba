#pragma once

// Turns clean scenes into ego-view observations: FOV truncation, occlusion,
// identity swaps at close approach, range-dependent localization noise and a
// shared ego-drift random walk.

#include "egoflow/scene_synth.hpp"
#include "egoflow/traj.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace egoflow {

struct NoiseProfile {
  double fov_deg = 90.0;
  double occlusion_radius = 0.3;
  double id_switch_dist = 0.5;
  double base_sigma = 0.05;
  double range_sigma_per_m = 0.02;
  double drift_sigma = 0.01;
  uint64_t seed = 0;

  void validate() const;
  // fov 360 and every magnitude zero: corruption is the identity map.
  static NoiseProfile identity();
};

struct AgentCorruption {
  int agent_id = 0;
  int occluded_frames = 0;
  int out_of_fov_frames = 0;
  int id_switches = 0;
  double mean_error = 0.0;  // meters, over visible frames
};

struct CorruptionReport {
  int scene_id = 0;
  int frames = 0;
  std::vector<AgentCorruption> agents;

  // Fraction of non-ego agent-frames marked invisible.
  double invisible_rate() const;
};

// One observed identity over the whole scene. Invisible frames hold
// linearly interpolated positions; `visible` is the source of truth.
struct ObservedTrack {
  int obs_id = 0;
  std::vector<Vec2> xy;
  std::vector<uint8_t> visible;
};

struct CorruptedScene {
  int scene_id = 0;
  double dt = 0.4;
  std::vector<ObservedTrack> tracks;  // non-ego observations
  SceneTrack ego_track;               // clean odometry

  int frames() const { return ego_track.end_frame(); }
};

// Ego heading at a frame, from its own motion (+x when it never moved).
Vec2 ego_heading(const SceneTrack& ego, int frame);

// Visibility over scene.tracks (in order) plus the ego as the last entry,
// which is always 1. An agent is hidden when it lies outside the FOV cone
// around the ego heading or when a nearer agent lies within
// occlusion_radius of the ego->agent segment.
std::vector<uint8_t> visibility(const CleanScene& scene, int frame, const NoiseProfile& profile);

std::pair<CorruptedScene, CorruptionReport> corrupt_scene(const CleanScene& scene,
                                                          const NoiseProfile& profile);

// A visible frame is dropped when the implied speed from the previous kept
// frame reaches `limit`. The result is already ANDed with `visible`.
std::vector<uint8_t> apply_speed_filter(std::span<const Vec2> positions, std::span<const uint8_t> visible,
                                        double dt, double limit = 2.0);

// Observation window over all observed tracks, ego last.
ObservedHistory observed_window(const CorruptedScene& scene, int start, int steps);

nlohmann::json corrupted_to_json(const CorruptedScene& scene);
CorruptedScene corrupted_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const CorruptionReport& report);

}  // namespace egoflow
