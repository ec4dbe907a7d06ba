#include "egoflow/scene_synth.hpp"

#include <doctest.h>

using namespace egoflow;

namespace {

double max_speed(const SceneTrack& t) {
  double best = 0.0;
  for (size_t f = 1; f < t.positions.size(); ++f) best = std::max(best, (t.positions[f] - t.positions[f - 1]).norm() / t.dt);
  return best;
}

bool same(const CleanScene& a, const CleanScene& b) {
  if (a.tracks.size() != b.tracks.size() || a.ego_track.positions != b.ego_track.positions) return false;
  for (size_t i = 0; i < a.tracks.size(); ++i) {
    if (a.tracks[i].positions != b.tracks[i].positions) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generation is deterministic and varies with the scene id") {
  SceneSpec spec;
  spec.seed = 7;
  CHECK(same(generate_scene(spec, 3), generate_scene(spec, 3)));
  CHECK_FALSE(same(generate_scene(spec, 3), generate_scene(spec, 4)));
  spec.seed = 8;
  SceneSpec other;
  other.seed = 7;
  CHECK_FALSE(same(generate_scene(spec, 3), generate_scene(other, 3)));
}

TEST_CASE("scene invariants over many seeds") {
  SceneSpec spec;
  for (int id = 0; id < 60; ++id) {
    const CleanScene s = generate_scene(spec, id);
    REQUIRE(s.tracks.size() == static_cast<size_t>(spec.n_agents - 1));
    for (const auto& t : s.tracks) {
      REQUIRE(t.t0 == 0);
      REQUIRE(t.end_frame() == spec.duration_frames);
      REQUIRE(max_speed(t) <= 2.5 + 1e-9);
      for (const auto& p : t.positions) REQUIRE(p.finite());
    }
    REQUIRE(s.ego_track.end_frame() == spec.duration_frames);
    REQUIRE(max_speed(s.ego_track) <= 2.5 + 1e-9);
    // a crossing event: some pedestrian pair within 0.8 m
    double closest = std::numeric_limits<double>::infinity();
    for (size_t a = 0; a < s.tracks.size(); ++a) {
      for (size_t b = a + 1; b < s.tracks.size(); ++b) {
        for (int f = 0; f < s.frames(); ++f) closest = std::min(closest, (s.tracks[a].at(f) - s.tracks[b].at(f)).norm());
      }
    }
    REQUIRE(closest < 0.8);
  }
}

TEST_CASE("static-avoid scenes keep a 0.3 m clearance") {
  SceneSpec spec;
  spec.n_agents = 3;
  spec.behavior_mix = {0.0, 0.0, 0.0, 1.0};
  for (int id = 0; id < 40; ++id) CHECK(min_pairwise_distance(generate_scene(spec, id), false) > 0.3);
}

TEST_CASE("a 20-frame scene has exactly one window per track") {
  SceneSpec spec;
  spec.duration_frames = 20;
  const CleanScene s = generate_scene(spec, 0);
  for (const auto& t : s.tracks) CHECK(t.end_frame() - t.t0 - 20 + 1 == 1);
}

TEST_CASE("infeasible specs are rejected") {
  SceneSpec spec;
  spec.n_agents = 1;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = SceneSpec{};
  spec.duration_frames = 19;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = SceneSpec{};
  spec.n_agents = 200;
  CHECK_THROWS_WITH_AS(generate_scene(spec), doctest::Contains("too small"), Error);
  spec = SceneSpec{};
  spec.behavior_mix = {0, 0, 0, 0};
  CHECK_THROWS_AS(generate_scene(spec), Error);
}

TEST_CASE("social step: lone agent walks straight at its goal") {
  SocialState s{{{0.0, 0.0}}, {{0.0, 0.0}}};
  const std::vector<Vec2> goal{{10.0, 0.0}};
  const std::vector<double> speed{1.3};
  for (int i = 0; i < 20; ++i) {
    s = social_step(s, goal, speed, {}, 0.4);
    CHECK(s.positions[0].y == 0.0);
    CHECK(s.velocities[0].x > 0.0);
  }
  // first step by hand: v = 0 + (1.3 - 0)/0.5 * 0.4
  SocialState first = social_step(SocialState{{{0.0, 0.0}}, {{0.0, 0.0}}}, goal, speed, {}, 0.4);
  CHECK(first.velocities[0].x == doctest::Approx(1.04));
  CHECK(first.positions[0].x == doctest::Approx(0.416));
}

TEST_CASE("social step: stationary at its goal stays put") {
  const SocialState s{{{2.0, 3.0}}, {{0.0, 0.0}}};
  const std::vector<Vec2> goal{{2.0, 3.0}};
  const std::vector<double> speed{1.3};
  const SocialState n = social_step(s, goal, speed, {}, 0.4);
  CHECK(n.positions[0] == s.positions[0]);
  CHECK(n.velocities[0] == Vec2{});
}

TEST_CASE("social step: speed clamp") {
  const SocialState s{{{0.0, 0.0}}, {{10.0, 0.0}}};
  const std::vector<Vec2> goal{{100.0, 0.0}};
  const std::vector<double> speed{5.0};
  CHECK(social_step(s, goal, speed, {}, 0.4).velocities[0].norm() == doctest::Approx(2.5));
}

TEST_CASE("social step: head-on agents deflect sideways") {
  SocialState s{{{-5.0, 0.0}, {5.0, 0.0}}, {{1.2, 0.0}, {-1.2, 0.0}}};
  const std::vector<Vec2> goals{{5.0, 0.0}, {-5.0, 0.0}};
  const std::vector<double> speeds{1.2, 1.2};
  double closest = 10.0;
  double lateral = 0.0;
  for (int i = 0; i < 40; ++i) {
    s = social_step(s, goals, speeds, {}, 0.4);
    closest = std::min(closest, (s.positions[0] - s.positions[1]).norm());
    lateral = std::max(lateral, std::abs(s.positions[0].y));
  }
  CHECK(closest > 0.2);
  CHECK(lateral > 0.05);
}

TEST_CASE("repulsion decays with distance and vanishes beyond range") {
  const std::vector<Vec2> goals{{0.0, 0.0}, {0.0, 0.0}};
  const std::vector<double> speeds{0.0, 0.0};
  auto push = [&](double gap) {
    const SocialState s{{{0.0, 0.0}, {gap, 0.0}}, {{0.0, 0.0}, {0.0, 0.0}}};
    return social_step(s, goals, speeds, {}, 0.4).velocities[0].norm();
  };
  CHECK(push(0.5) > push(1.0));
  CHECK(push(1.0) > push(1.5));
  CHECK(push(2.5) == 0.0);
}

TEST_CASE("scene JSON round trip") {
  const CleanScene s = generate_scene(SceneSpec{}, 5);
  const CleanScene r = scene_from_json(scene_to_json(s));
  CHECK(same(s, r));
  CHECK(r.scene_id == 5);
  CHECK(r.dt() == s.dt());
  const auto j = scene_to_json(s);
  CHECK(j.contains("agents"));
  CHECK(j.contains("ego_id"));
}
