#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace egoflow::testing {

Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ObservedHistory random_history(int agents, int steps, Rng& rng, int min_valid) {
  ObservedHistory h;
  h.values = randn(agents, 2 * steps, rng);
  h.mask = Matrix::Ones(agents, steps);
  h.ego_index = agents - 1;
  std::uniform_int_distribution<int> pick(0, steps - 1);
  for (int r = 0; r + 1 < agents; ++r) {
    const int hide = std::uniform_int_distribution<int>(0, steps - min_valid)(rng);
    for (int i = 0; i < hide; ++i) h.mask(r, pick(rng)) = 0.0;
  }
  fill_invisible(h.values, h.mask);
  return h;
}

TrainExample random_example(int agents, int history_steps, int future_steps, Rng& rng) {
  TrainExample ex;
  ex.history = random_history(agents, history_steps, rng);
  ex.past = randn(agents, 2 * history_steps, rng);
  ex.future = randn(agents, 2 * future_steps, rng);
  return ex;
}

// ------------------------------------------------------------ fixture

Fixture build_fixture(const RunConfig& config) {
  Fixture fx;
  fx.config = config;
  for (int i = 0; i < config.scenes; ++i) {
    fx.clean.push_back(generate_scene(config.scene, i));
    auto [obs, report] = corrupt_scene(fx.clean.back(), config.noise);
    fx.corrupted.push_back(std::move(obs));
    fx.reports.push_back(std::move(report));
    fx.aligned.push_back(align_scene(fx.clean.back(), fx.corrupted.back(), config.bench));
    auto w = window_samples(fx.aligned.back(), config.bench);
    fx.samples.insert(fx.samples.end(), w.begin(), w.end());
  }
  split_chronological(fx.samples, config.bench);
  fx.scale = normalization_scale(fx.samples);
  assign_norm(fx.samples, fx.scale);
  return fx;
}

std::vector<BenchmarkSample> of_split(const std::vector<BenchmarkSample>& samples, Split split) {
  std::vector<BenchmarkSample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [split](const BenchmarkSample& s) { return s.split == split; });
  return out;
}

// ------------------------------------------------------------ assignment

BruteAssignment brute_force_assignment(const Matrix& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  BruteAssignment best{-1, 0.0};
  // Permute the longer side; pair position i of the shorter side with perm[i].
  const bool transpose = rows > cols;
  const int n_short = transpose ? cols : rows;
  const int n_long = transpose ? rows : cols;
  std::vector<int> perm(static_cast<size_t>(n_long));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    int pairs = 0;
    double total = 0.0;
    for (int i = 0; i < n_short; ++i) {
      const double c = transpose ? cost(perm[static_cast<size_t>(i)], i) : cost(i, perm[static_cast<size_t>(i)]);
      if (std::isinf(c)) continue;
      ++pairs;
      total += c;
    }
    if (pairs > best.pairs || (pairs == best.pairs && total < best.cost)) best = {pairs, total};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ------------------------------------------------------------ visibility

std::vector<uint8_t> ray_visibility(const CleanScene& scene, int frame, const NoiseProfile& profile) {
  const Vec2 ego = scene.ego_track.at(frame);
  const Vec2 heading = ego_heading(scene.ego_track, frame);
  const double heading_angle = std::atan2(heading.y, heading.x);
  const size_t n = scene.tracks.size();
  std::vector<uint8_t> out(n + 1, 1);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 target = scene.tracks[i].at(frame);
    const Vec2 d = target - ego;
    const double length = d.norm();
    if (profile.fov_deg < 360.0 && length > 1e-9) {
      double off = std::atan2(d.y, d.x) - heading_angle;
      off = std::remainder(off, 2.0 * std::numbers::pi);
      if (std::abs(off) > profile.fov_deg * std::numbers::pi / 360.0) {
        out[i] = 0;
        continue;
      }
    }
    for (size_t j = 0; j < n && out[i]; ++j) {
      if (j == i) continue;
      const Vec2 c = scene.tracks[j].at(frame) - ego;
      if (c.norm() >= length) continue;
      const double r = profile.occlusion_radius;
      if (length <= 1e-12) {
        if (c.norm() < r) out[i] = 0;
        continue;
      }
      // |s u - c|^2 = r^2 with u the unit ray direction.
      const Vec2 u = d * (1.0 / length);
      const double b = u.dot(c);
      const double disc = b * b - (c.squared_norm() - r * r);
      if (disc <= 0.0) continue;
      const double s1 = b - std::sqrt(disc);
      const double s2 = b + std::sqrt(disc);
      if (s1 < length && s2 > 0.0) out[i] = 0;
    }
  }
  return out;
}

// ------------------------------------------------------------ windows

std::vector<uint8_t> speed_filter_oracle(const std::vector<Vec2>& xy, const std::vector<uint8_t>& visible, double dt,
                                         double limit) {
  std::vector<uint8_t> keep(xy.size(), 0);
  std::vector<size_t> kept;
  for (size_t f = 0; f < xy.size(); ++f) {
    if (!visible[f]) continue;
    bool ok = true;
    if (!kept.empty()) {
      const size_t p = kept.back();
      const double dx = xy[f].x - xy[p].x;
      const double dy = xy[f].y - xy[p].y;
      ok = std::sqrt(dx * dx + dy * dy) < limit * dt * static_cast<double>(f - p);
    }
    if (ok) {
      keep[f] = 1;
      kept.push_back(f);
    }
  }
  return keep;
}

std::vector<WindowKey> enumerate_windows(const CleanScene& clean, const CorruptedScene& corrupted,
                                         const std::vector<int>& obs_to_gt, const BenchConfig& config) {
  const int frames = clean.frames();
  // Valid frames per ground-truth index after filtering.
  std::vector<std::vector<uint8_t>> valid(clean.tracks.size(), std::vector<uint8_t>(static_cast<size_t>(frames), 0));
  for (size_t o = 0; o < corrupted.tracks.size(); ++o) {
    if (obs_to_gt[o] < 0) continue;
    const auto& t = corrupted.tracks[o];
    valid[static_cast<size_t>(obs_to_gt[o])] = speed_filter_oracle(t.xy, t.visible, corrupted.dt, config.speed_limit);
  }
  std::vector<WindowKey> out;
  const int span = config.history_steps + config.future_steps;
  for (int start = 0; start <= frames - span; start += config.stride) {
    WindowKey key{clean.scene_id, start, {}};
    for (size_t g = 0; g < clean.tracks.size(); ++g) {
      const auto& v = valid[g];
      const int count = static_cast<int>(std::count(v.begin() + start, v.begin() + start + config.history_steps, 1));
      if (count >= config.min_valid && clean.tracks[g].end_frame() >= start + span) {
        key.agent_ids.push_back(clean.tracks[g].agent_id);
      }
    }
    if (!key.agent_ids.empty()) out.push_back(key);
  }
  return out;
}

std::map<int, Split> split_oracle(const std::map<int, size_t>& samples_per_scene, const BenchConfig& config) {
  std::vector<int> ids;
  std::vector<double> prefix{0.0};
  for (const auto& [id, n] : samples_per_scene) {
    ids.push_back(id);
    prefix.push_back(prefix.back() + static_cast<double>(n));
  }
  const int n = static_cast<int>(ids.size());
  const double total = prefix.back();
  std::tuple<double, double, int, int> best{std::numeric_limits<double>::infinity(), 0.0, 0, 0};
  for (int a = 1; a <= n - 2; ++a) {
    for (int b = a + 1; b <= n - 1; ++b) {
      const std::tuple<double, double, int, int> key{
          std::abs(prefix[static_cast<size_t>(a)] / total - config.train_fraction),
          std::abs(prefix[static_cast<size_t>(b)] / total - (config.train_fraction + config.val_fraction)), a, b};
      best = std::min(best, key);
    }
  }
  std::map<int, Split> out;
  for (int i = 0; i < n; ++i) {
    out[ids[static_cast<size_t>(i)]] =
        i < std::get<2>(best) ? Split::train : (i < std::get<3>(best) ? Split::val : Split::test);
  }
  return out;
}

// ------------------------------------------------------------ metrics

Displacement exhaustive_min(const Matrix& candidates, const Matrix& truth) {
  const Eigen::Index T = truth.cols() / 2;
  Displacement best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < candidates.rows(); ++k) {
    double sum = 0.0;
    double last = 0.0;
    for (Eigen::Index s = 0; s < T; ++s) {
      const double dx = candidates(k, 2 * s) - truth(0, 2 * s);
      const double dy = candidates(k, 2 * s + 1) - truth(0, 2 * s + 1);
      last = std::sqrt(dx * dx + dy * dy);
      sum += last;
    }
    best.ade = std::min(best.ade, sum / static_cast<double>(T));
    best.fde = std::min(best.fde, last);
  }
  return best;
}

// ------------------------------------------------------------ gradients

GradCheck gradient_check(const ModelConfig& config, int agents, int K, uint64_t seed, double eps, double floor) {
  BiFlowModel model(config);
  Rng rng = derive_rng(seed, 0x9c);
  const TrainExample ex = random_example(agents, config.history_steps, config.future_steps, rng);
  const FlowDraw draw = FlowDraw::sample(K, agents, config.history_steps, config.future_steps, TimeSampler{}, rng);
  const LossWeights weights;

  ad::Tape tape;
  Binder bind(tape, model.params());
  ad::Var total;
  model.loss(bind, ex, draw, weights, &total);
  tape.backward(total);
  const Grads grads = bind.collect();

  auto loss_value = [&] {
    ad::Tape t(false);
    Binder b(t, model.params());
    return model.loss(b, ex, draw, weights).total;
  };

  GradCheck out;
  for (int p = 0; p < model.params().size(); ++p) {
    Param& param = model.params()[p];
    const std::string group = ParamSet::group_of(param.name);
    double& group_err = out.per_group[group];
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
      const double keep = param.value.data()[i];
      param.value.data()[i] = keep + eps;
      const double up = loss_value();
      param.value.data()[i] = keep - eps;
      const double down = loss_value();
      param.value.data()[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const Matrix& g = grads[static_cast<size_t>(p)];
      const double analytic = g.size() == 0 ? 0.0 : g.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      group_err = std::max(group_err, rel);
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_param = param.name + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

// ------------------------------------------------------------ misc

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("egoflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace egoflow::testing
