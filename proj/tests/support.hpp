#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance binary. Oracles here are deliberately written differently from
// the library code they check.

#include "egoflow/bench.hpp"
#include "egoflow/biflow.hpp"
#include "egoflow/ego_noise.hpp"
#include "egoflow/pipeline.hpp"
#include "egoflow/scene_synth.hpp"
#include "egoflow/train.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace egoflow::testing {

Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// A random history with `agents` rows (ego last), each non-ego row keeping
// at least `min_valid` visible steps.
ObservedHistory random_history(int agents, int steps, Rng& rng, int min_valid = 2);
TrainExample random_example(int agents, int history_steps, int future_steps, Rng& rng);

// ------------------------------------------------------------ benchmark fixture

struct Fixture {
  RunConfig config;
  std::vector<CleanScene> clean;
  std::vector<CorruptedScene> corrupted;
  std::vector<CorruptionReport> reports;
  std::vector<AlignedScene> aligned;
  std::vector<BenchmarkSample> samples;  // split and normalized
  double scale = 1.0;
};

// Runs synth, corrupt and build in memory for config.scenes scenes.
Fixture build_fixture(const RunConfig& config);
std::vector<BenchmarkSample> of_split(const std::vector<BenchmarkSample>& samples, Split split);

// ------------------------------------------------------------ oracles

// Minimum total cost over every injective assignment of rows to columns
// that maximizes the number of finite pairs.
struct BruteAssignment {
  int pairs = 0;
  double cost = 0.0;
};
BruteAssignment brute_force_assignment(const Matrix& cost);

// Visibility by casting a ray from the ego to each agent and intersecting
// it with a disc around every nearer agent; FOV by wrapped bearing.
std::vector<uint8_t> ray_visibility(const CleanScene& scene, int frame, const NoiseProfile& profile);

std::vector<uint8_t> speed_filter_oracle(const std::vector<Vec2>& xy, const std::vector<uint8_t>& visible, double dt,
                                         double limit);

// One kept window: scene, start frame and the kept non-ego ground-truth ids.
struct WindowKey {
  int scene_id = 0;
  int start = 0;
  std::vector<int> agent_ids;
  bool operator==(const WindowKey&) const = default;
};
// Windows of one scene from the raw observations and a given observed ->
// ground-truth assignment.
std::vector<WindowKey> enumerate_windows(const CleanScene& clean, const CorruptedScene& corrupted,
                                         const std::vector<int>& obs_to_gt, const BenchConfig& config);

// Scene id -> split by exhaustive search over boundary pairs, ranking first
// by the train boundary error, then by the val boundary error.
std::map<int, Split> split_oracle(const std::map<int, size_t>& samples_per_scene, const BenchConfig& config);

// min over candidates of mean / final Euclidean error, by explicit loops over
// x/y pairs. candidates: n x 2T.
Displacement exhaustive_min(const Matrix& candidates, const Matrix& truth);

// ------------------------------------------------------------ gradients

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::map<std::string, double> per_group;  // group -> max relative error
  size_t checked = 0;
};
// Central differences of the total loss against tape gradients over every
// scalar of every parameter. Relative error |a - n| / max(|a|, |n|, floor).
GradCheck gradient_check(const ModelConfig& config, int agents, int K, uint64_t seed, double eps = 1e-4,
                         double floor = 1e-6);

// ------------------------------------------------------------ misc

std::string read_file(const std::filesystem::path& path);
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace egoflow::testing
