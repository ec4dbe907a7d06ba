#include "egoflow/bench.hpp"

#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace egoflow;

namespace {

SceneTrack line_track(int id, int frames, Vec2 start, Vec2 step) {
  SceneTrack t;
  t.agent_id = id;
  for (int f = 0; f < frames; ++f) t.positions.push_back(start + step * f);
  return t;
}

// One pedestrian and the ego over `frames`; the pedestrian is observed
// exactly at the listed frames.
AlignedScene aligned_one(int frames, const std::vector<int>& visible_frames) {
  AlignedScene s;
  s.ego = line_track(0, frames, {0, 0}, {0.3, 0});
  AlignedAgent a;
  a.gt_id = 1;
  for (int f = 0; f < frames; ++f) a.clean.push_back({2.0 + 0.1 * f, 1.0});
  a.observed = a.clean;
  a.valid.assign(static_cast<size_t>(frames), 0);
  for (int f : visible_frames) a.valid[static_cast<size_t>(f)] = 1;
  s.agents.push_back(a);
  return s;
}

BenchmarkSample tiny_sample(int scene, Split split, double offset = 0.0) {
  BenchmarkSample s;
  s.scene_id = scene;
  s.split = split;
  s.history.values = Matrix::Constant(2, 16, offset);
  s.history.mask = Matrix::Ones(2, 8);
  s.history.ego_index = 1;
  s.past_clean = Matrix::Constant(2, 16, offset);
  s.future_clean = Matrix::Constant(2, 24, offset);
  s.agent_ids = {1, 0};
  return s;
}

}  // namespace

TEST_CASE("identical observation matches its track at zero cost") {
  const BenchConfig cfg;
  const SceneTrack gt = line_track(1, 10, {0, 0}, {0.4, 0.1});
  const std::vector<TrackObservation> obs{{gt.positions, std::vector<uint8_t>(10, 1)}};
  const Association a = match_tracks(obs, {gt}, cfg, 0.4);
  CHECK(a.obs_to_gt == std::vector<int>{0});
  CHECK(a.total_cost < 1e-20);
  CHECK(a.dropped.empty());
}

TEST_CASE("identity-switch fixture: hand-computed 2x2 cost") {
  const BenchConfig cfg;
  const SceneTrack A = line_track(1, 8, {0, 0}, {0.4, 0});
  const SceneTrack B = line_track(2, 8, {0, 0.6}, {0.4, 0});
  std::vector<Vec2> o1, o2;
  for (int f = 0; f < 8; ++f) {
    o1.push_back(f <= 4 ? A.at(f) : B.at(f));
    o2.push_back(f <= 4 ? B.at(f) : A.at(f));
  }
  const std::vector<TrackObservation> obs{{o1, std::vector<uint8_t>(8, 1)}, {o2, std::vector<uint8_t>(8, 1)}};
  const Matrix c = association_cost(obs, {A, B}, cfg, 0.4);
  // position: 3 or 5 of 8 frames off by 0.6 m; velocity: one 1.5 m/s jump in 7 pairs;
  // acceleration: +-3.75 m/s^2 in 2 of 6 triples.
  const double vel = 2.25 / 7.0;
  const double acc = 2.0 * 3.75 * 3.75 / 6.0;
  const double near = 3 * 0.36 / 8 + 0.5 * vel + 0.25 * acc;
  const double far = 5 * 0.36 / 8 + 0.5 * vel + 0.25 * acc;
  CHECK(c(0, 0) == doctest::Approx(near).epsilon(1e-12));
  CHECK(c(0, 1) == doctest::Approx(far).epsilon(1e-12));
  CHECK(c(1, 1) == doctest::Approx(near).epsilon(1e-12));
  CHECK(c(1, 0) == doctest::Approx(far).epsilon(1e-12));
  const Association a = match_tracks(obs, {A, B}, cfg, 0.4);
  CHECK(a.obs_to_gt == std::vector<int>{0, 1});
  CHECK(a.total_cost == doctest::Approx(2 * near).epsilon(1e-12));
}

TEST_CASE("short overlap is forbidden and dropped with a reason") {
  const BenchConfig cfg;
  const SceneTrack gt = line_track(1, 10, {0, 0}, {0.4, 0});
  std::vector<uint8_t> valid(10, 0);
  valid[3] = 1;
  const std::vector<TrackObservation> obs{{gt.positions, valid}};
  const Matrix c = association_cost(obs, {gt}, cfg, 0.4);
  CHECK(std::isinf(c(0, 0)));
  const Association a = match_tracks(obs, {gt}, cfg, 0.4);
  CHECK(a.obs_to_gt == std::vector<int>{-1});
  REQUIRE(a.dropped.size() == 1);
  CHECK(a.dropped[0].find("fewer than 2") != std::string::npos);
  CHECK(match_tracks({}, {gt}, cfg, 0.4).obs_to_gt.empty());
}

TEST_CASE("derivative terms skip gaps wider than two frames") {
  const BenchConfig cfg;
  const SceneTrack gt = line_track(1, 10, {0, 0}, {0.4, 0});
  std::vector<Vec2> xy = gt.positions;
  xy[5] = {100.0, 100.0};  // hidden frame with a wild value
  std::vector<uint8_t> valid(10, 1);
  valid[4] = valid[5] = valid[6] = 0;  // gap 3 -> 7
  const Matrix c = association_cost({{xy, valid}}, {gt}, cfg, 0.4);
  CHECK(c(0, 0) < 1e-20);
}

TEST_CASE("window rules") {
  BenchConfig cfg;
  SUBCASE("20 frames give exactly one window") {
    CHECK(window_samples(aligned_one(20, {0, 1, 2, 3, 4, 5, 6, 7}), cfg).size() == 1);
  }
  SUBCASE("exactly three valid frames are retained") {
    const auto w = window_samples(aligned_one(20, {0, 1, 2}), cfg);
    REQUIRE(w.size() == 1);
    CHECK(w[0].history.mask.row(0).sum() == 3.0);
    CHECK_NOTHROW(w[0].validate(cfg));
    // edges held, interior from visible frames
    CHECK(w[0].history.values(0, 14) == w[0].history.values(0, 4));
  }
  SUBCASE("two valid frames drop the window") {
    CHECK(window_samples(aligned_one(20, {0, 1}), cfg).empty());
  }
  SUBCASE("stride-1 count") {
    std::vector<int> all(30);
    std::iota(all.begin(), all.end(), 0);
    CHECK(window_samples(aligned_one(30, all), cfg).size() == 11);
  }
}

TEST_CASE("samples from generated scenes satisfy their invariants") {
  RunConfig cfg = RunConfig::defaults();
  cfg.scenes = 12;
  const auto fx = testing::build_fixture(cfg);
  REQUIRE(!fx.samples.empty());
  for (const auto& s : fx.samples) {
    CHECK_NOTHROW(s.validate(cfg.bench));
    CHECK(s.history.mask.row(s.history.ego_index).minCoeff() == 1.0);
    CHECK(s.norm.scale == fx.scale);
  }
}

TEST_CASE("chronological split") {
  BenchConfig cfg;
  SUBCASE("ten equal scenes") {
    std::vector<BenchmarkSample> v;
    for (int scene = 0; scene < 10; ++scene) {
      for (int i = 0; i < 5; ++i) v.push_back(tiny_sample(scene, Split::train));
    }
    split_chronological(v, cfg);
    for (const auto& s : v) {
      const Split want = s.scene_id < 7 ? Split::train : (s.scene_id < 8 ? Split::val : Split::test);
      CHECK(s.split == want);
    }
  }
  SUBCASE("uneven scenes against the boundary oracle") {
    Rng rng(4);
    int bounded = 0;
    for (int trial = 0; trial < 200; ++trial) {
      // 100 samples over 8..16 scenes of uneven size
      const int scenes = std::uniform_int_distribution<int>(8, 16)(rng);
      std::vector<size_t> sizes(static_cast<size_t>(scenes), 1);
      for (int extra = 0; extra < 100 - scenes; ++extra) ++sizes[std::uniform_int_distribution<size_t>(0, sizes.size() - 1)(rng)];
      std::vector<BenchmarkSample> v;
      std::map<int, size_t> per_scene;
      for (int scene = 0; scene < scenes; ++scene) {
        per_scene[scene] = sizes[static_cast<size_t>(scene)];
        for (size_t i = 0; i < sizes[static_cast<size_t>(scene)]; ++i) v.push_back(tiny_sample(scene, Split::train));
      }
      split_chronological(v, cfg);
      const auto oracle = testing::split_oracle(per_scene, cfg);
      size_t train = 0;
      std::map<Split, std::set<int>> ids;
      for (const auto& s : v) {
        REQUIRE(s.split == oracle.at(s.scene_id));
        train += s.split == Split::train;
        ids[s.split].insert(s.scene_id);
      }
      for (int id : ids[Split::test]) CHECK(ids[Split::train].count(id) == 0);
      CHECK(!ids[Split::val].empty());
      CHECK(!ids[Split::test].empty());
      // The share bound applies when the last two scenes, which must stay out
      // of train, leave room to reach 70 %.
      if (100 - sizes[sizes.size() - 1] - sizes[sizes.size() - 2] >= 70) {
        ++bounded;
        const double share = static_cast<double>(*std::max_element(sizes.begin(), sizes.end())) / 100.0;
        CHECK(std::abs(static_cast<double>(train) / 100.0 - 0.7) <= share + 1e-12);
      }
    }
    CHECK(bounded > 150);
  }
  SUBCASE("fewer than three scenes") {
    std::vector<BenchmarkSample> v{tiny_sample(0, Split::train), tiny_sample(1, Split::train)};
    CHECK_THROWS_WITH(split_chronological(v, cfg), doctest::Contains("at least 3 scenes"));
  }
}

TEST_CASE("normalization scale is the train-only std of ego-relative coordinates") {
  std::vector<BenchmarkSample> v{tiny_sample(0, Split::train), tiny_sample(1, Split::test, 50.0)};
  v[0].past_clean(0, 0) = 2.0;
  v[0].future_clean(0, 3) = -1.0;
  // 80 coordinates: one 2, one -1, the rest 0 (ego origin is 0)
  const double mean = 1.0 / 80.0;
  const double var = 5.0 / 80.0 - mean * mean;
  CHECK(normalization_scale(v) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  v[0].split = Split::val;
  CHECK_THROWS(normalization_scale(v));
}

TEST_CASE("stats on a hand sample") {
  BenchmarkSample s = tiny_sample(0, Split::train);
  s.history.mask(0, 2) = 0.0;
  s.history.mask(0, 3) = 0.0;
  s.history.values(0, 0) = 1.0;  // 1 m off at step 0
  const BenchStats st = bench_stats({s});
  CHECK(st.noisy_rate == doctest::Approx(0.25));
  CHECK(st.history_mse == doctest::Approx(1.0 / 8.0));
  CHECK(st.agents == 1);
}

TEST_CASE("shard round trip and validation") {
  RunConfig cfg = RunConfig::defaults();
  cfg.scenes = 6;
  const auto fx = testing::build_fixture(cfg);
  const auto dir = testing::scratch_dir("shard");
  ShardHeader h;
  h.scale = fx.scale;
  h.count = fx.samples.size();
  write_shard(dir / "all.shard", h, fx.samples, cfg.bench);
  ShardHeader back;
  const auto read = read_shard(dir / "all.shard", &back, cfg.bench);
  CHECK(back.count == h.count);
  CHECK(back.data_fingerprint() == h.data_fingerprint());
  REQUIRE(read.size() == fx.samples.size());
  for (size_t i = 0; i < read.size(); ++i) CHECK(sample_to_json(read[i]) == sample_to_json(fx.samples[i]));

  std::vector<BenchmarkSample> bad{fx.samples.front()};
  bad[0].history.mask.row(0).setZero();
  h.count = 1;
  CHECK_THROWS(write_shard(dir / "bad.shard", h, bad, cfg.bench));
  h.count = 5;
  CHECK_THROWS(write_shard(dir / "bad.shard", h, {fx.samples.front()}, cfg.bench));
}
