#pragma once

// Benchmark construction: track association, filtering, sliding windows,
// chronological splits, normalization scale and shard I/O.

#include "egoflow/ego_noise.hpp"
#include "egoflow/scene_synth.hpp"
#include "egoflow/traj.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace egoflow {

enum class Split { train, val, test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct MatchWeights {
  double pos = 1.0;
  double vel = 0.5;
  double acc = 0.25;
};

struct BenchConfig {
  int history_steps = 8;
  int future_steps = 12;
  int min_valid = 3;
  int stride = 1;
  double speed_limit = 2.0;  // m/s
  int max_derivative_gap = 2;  // frames; wider gaps are excluded from velocity/acceleration terms
  MatchWeights weights;
  double train_fraction = 0.7;
  double val_fraction = 0.1;
};

struct BenchmarkSample {
  ObservedHistory history;  // A x 2T_p, ego last
  Matrix past_clean;        // A x 2T_p
  Matrix future_clean;      // A x 2T_f
  NormRecord norm;
  int scene_id = 0;
  int window_start = 0;
  Split split = Split::train;
  std::vector<int> agent_ids;  // ground-truth ids per row

  int agents() const { return history.agents(); }
  // Throws on any violated sample invariant.
  void validate(const BenchConfig& config) const;
};

// A track reduced to what association needs: positions and per-frame validity.
struct TrackObservation {
  std::vector<Vec2> xy;
  std::vector<uint8_t> valid;
};

// n_obs x n_gt overlap-normalized weighted MSE over frames where the
// observation is valid. Pairs overlapping on fewer than 2 frames cost +inf.
Matrix association_cost(const std::vector<TrackObservation>& observed, const std::vector<SceneTrack>& truth,
                        const BenchConfig& config, double dt);

struct Association {
  std::vector<int> obs_to_gt;  // -1 for dropped tracks
  double total_cost = 0.0;
  std::vector<std::string> dropped;  // one reason per dropped observed track
};

Association match_tracks(const std::vector<TrackObservation>& observed, const std::vector<SceneTrack>& truth,
                         const BenchConfig& config, double dt);

struct AlignedAgent {
  int gt_id = 0;
  std::vector<Vec2> clean;
  std::vector<Vec2> observed;
  std::vector<uint8_t> valid;
};

struct AlignedScene {
  int scene_id = 0;
  double dt = 0.4;
  std::vector<AlignedAgent> agents;  // non-ego, ground-truth order
  SceneTrack ego;
  Association association;
};

// Speed filter on every observed track, then association to the clean tracks.
AlignedScene align_scene(const CleanScene& clean, const CorruptedScene& corrupted, const BenchConfig& config);

// Stride windows; a window is kept iff some non-ego agent has >= min_valid
// valid observation frames. Only such agents (plus the ego) enter the sample.
std::vector<BenchmarkSample> window_samples(const AlignedScene& scene, const BenchConfig& config);

// Tags samples by scene order: boundaries between scenes, closest to the
// configured cumulative fractions. Throws with fewer than 3 scenes.
void split_chronological(std::vector<BenchmarkSample>& samples, const BenchConfig& config);

// Standard deviation of ego-relative clean coordinates over train samples.
double normalization_scale(const std::vector<BenchmarkSample>& samples);
void assign_norm(std::vector<BenchmarkSample>& samples, double scale);

struct BenchStats {
  size_t samples = 0;
  size_t scenes = 0;
  size_t agents = 0;          // non-ego agent rows
  double noisy_rate = 0.0;    // fraction of non-ego history frames marked invisible
  double history_mse = 0.0;   // m^2, filled history vs clean past, non-ego rows
};
BenchStats bench_stats(const std::vector<BenchmarkSample>& samples);
nlohmann::json stats_to_json(const BenchStats& stats);

struct ShardHeader {
  int version = 1;
  int history_steps = 8;
  int future_steps = 12;
  double dt = 0.4;
  double scale = 1.0;
  size_t count = 0;

  // Identifies what a model trained on this data expects.
  std::string data_fingerprint() const;
};

nlohmann::json sample_to_json(const BenchmarkSample& s);
BenchmarkSample sample_from_json(const nlohmann::json& j);

// Length-prefixed JSON: u32 little-endian byte length, then the record; the
// first record is the header.
void write_shard(const std::filesystem::path& path, const ShardHeader& header,
                 const std::vector<BenchmarkSample>& samples, const BenchConfig& config);
std::vector<BenchmarkSample> read_shard(const std::filesystem::path& path, ShardHeader* header,
                                        const BenchConfig& config);

}  // namespace egoflow
