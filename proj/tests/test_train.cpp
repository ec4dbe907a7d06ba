#include "egoflow/train.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace egoflow;
using egoflow::testing::randn;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.latent_dim = 8;
  c.heads = 2;
  c.modes = 4;
  c.decoder_layers = 1;
  c.max_agents = 16;
  return c;
}

const egoflow::testing::Fixture& fixture() {
  static const egoflow::testing::Fixture fx = [] {
    RunConfig cfg = RunConfig::defaults();
    cfg.scenes = 6;
    return egoflow::testing::build_fixture(cfg);
  }();
  return fx;
}

std::vector<BenchmarkSample> first(size_t n) {
  auto s = egoflow::testing::of_split(fixture().samples, Split::train);
  s.resize(std::min(n, s.size()));
  return s;
}

ObservedHistory line_history(Vec2 start, Vec2 step, int steps = 8) {
  ObservedHistory h;
  h.values = Matrix(1, 2 * steps);
  h.mask = Matrix::Ones(1, steps);
  for (int k = 0; k < steps; ++k) set_point(h.values, 0, k, start + step * k);
  return h;
}

}  // namespace

TEST_CASE("AdamW first step and decoupled decay") {
  ParamSet p;
  p.add("g.w", Matrix::Constant(2, 2, 1.0));
  p.add("g.b", Matrix::Constant(1, 2, 1.0));
  AdamW opt(p, 0.1);
  Grads g{Matrix::Constant(2, 2, 0.5), Matrix::Constant(1, 2, -2.0)};
  opt.step(p, g, 0.01);
  // bias-corrected first step moves by lr * sign(g); the matrix also decays
  CHECK(p[0].value(0, 0) == doctest::Approx(1.0 * (1.0 - 0.001) - 0.01).epsilon(1e-9));
  CHECK(p[1].value(0, 0) == doctest::Approx(1.0 + 0.01).epsilon(1e-9));
  // missing gradients count as zero: the vector keeps momentum only
  AdamW fresh(p, 0.1);
  const Matrix before = p[1].value;
  fresh.step(p, Grads{Matrix(), Matrix()}, 0.01);
  CHECK(p[1].value == before);
  CHECK(fresh.steps() == 1);
}

TEST_CASE("warmup then cosine") {
  TrainConfig c;
  c.lr = 1e-3;
  c.warmup_epochs = 2;
  const long per = 10, total = 100;
  CHECK(learning_rate(c, 0, total, per) == doctest::Approx(5e-5));
  CHECK(learning_rate(c, 19, total, per) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 20, total, per) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 60, total, per) == doctest::Approx(5e-4));
  CHECK(learning_rate(c, 99, total, per) < 1e-6);
  for (long s = 20; s < 99; ++s) CHECK(learning_rate(c, s + 1, total, per) <= learning_rate(c, s, total, per));
}

TEST_CASE("gradient clipping") {
  Grads g{Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, 4.0)};
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0](0, 0) == doctest::Approx(0.6));
  CHECK(g[1](0, 0) == doctest::Approx(0.8));
  Grads small{Matrix::Constant(1, 1, 0.1)};
  clip_grad_norm(small, 1.0);
  CHECK(small[0](0, 0) == 0.1);
}

TEST_CASE("zero reconstruction weight leaves the history decoder untouched") {
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.weight_decay = 0.0;
  tc.lambda_recon = 0.0;
  tc.warmup_epochs = 0;
  ParamSet initial;
  TrainHooks hooks;
  hooks.on_init = [&](BiFlowModel& m) { initial = m.params(); };
  const TrainResult r = train(first(12), {}, tiny_model(), tc, hooks);
  int history = 0, moved = 0;
  for (int i = 0; i < initial.size(); ++i) {
    const bool same = r.model.params()[i].value == initial[i].value;
    if (ParamSet::group_of(initial[i].name) == "history") {
      ++history;
      CHECK(same);
    } else {
      moved += !same;
    }
  }
  CHECK(history > 0);
  CHECK(moved > 0);
}

TEST_CASE("training is bit-stable, also across thread counts") {
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 2;
  const auto data = first(20);
  REQUIRE(data.size() == 20);
  const TrainResult a = train(data, {}, tiny_model(), tc);
  REQUIRE(a.curves.step_loss.size() > 100);
  setenv("EGOFLOW_THREADS", "3", 1);
  const TrainResult b = train(data, {}, tiny_model(), tc);
  unsetenv("EGOFLOW_THREADS");
  CHECK(a.curves.step_loss[100] == b.curves.step_loss[100]);
  CHECK(a.curves.step_loss == b.curves.step_loss);
  for (double l : a.curves.step_loss) CHECK(std::isfinite(l));
}

TEST_CASE("best validation epoch is kept") {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.val_steps = 2;
  const auto val = egoflow::testing::of_split(fixture().samples, Split::val);
  const TrainResult r = train(first(16), val, tiny_model(), tc);
  REQUIRE(r.curves.epochs.size() == 3);
  double best = r.curves.epochs[0].val_min_ade;
  for (const auto& e : r.curves.epochs) best = std::min(best, e.val_min_ade);
  CHECK(r.curves.best_val == best);
  CHECK(r.curves.epochs[static_cast<size_t>(r.curves.best_epoch)].val_min_ade == best);
}

TEST_CASE("divergence aborts and persists the batch") {
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 3;
  TrainHooks hooks;
  const auto dir = egoflow::testing::scratch_dir("diverge");
  hooks.failure_path = dir / "failed_batch.json";
  hooks.on_init = [](BiFlowModel& m) { m.params()[0].value(0, 0) = std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(train(first(6), {}, tiny_model(), tc, hooks), TrainingDiverged);
  REQUIRE(std::filesystem::exists(*hooks.failure_path));
  const auto j = nlohmann::json::parse(egoflow::testing::read_file(*hooks.failure_path));
  CHECK(j.contains("step"));
}

TEST_CASE("displacement metrics on the straight-line fixture") {
  Matrix truth(1, 24), exact(1, 24), off(1, 24);
  for (int s = 0; s < 12; ++s) {
    set_point(truth, 0, s, {0.1 * (s + 1), 0.0});
    set_point(off, 0, s, {0.1 * (s + 1) + 0.5, 0.0});
  }
  exact = truth;
  Matrix both(2, 24);
  both << exact, off;
  const Displacement d = min_displacement(both, truth);
  CHECK(d.ade == 0.0);
  CHECK(d.fde == 0.0);
  const Displacement o = displacement(off, truth);
  CHECK(o.ade == doctest::Approx(0.5));
  CHECK(o.fde == doctest::Approx(0.5));
  CHECK(min_displacement(off, truth).ade == o.ade);
}

TEST_CASE("minima are taken independently") {
  Matrix truth = Matrix::Zero(1, 4);
  Matrix c(2, 4);
  c << 0.1, 0, 3, 0,  // good start, bad end
      1, 0, 1, 0;     // constant 1
  const Displacement d = min_displacement(c, truth);
  CHECK(d.ade == doctest::Approx(1.0));
  CHECK(d.fde == doctest::Approx(1.0));
  CHECK(displacement(c.row(0), truth).ade == doctest::Approx(1.55));
}

TEST_CASE("ranking by logit breaks ties toward the lower index") {
  Matrix l(4, 1);
  l << 0.5, 2.0, 0.5, 2.0;
  CHECK(rank_by_logit(l, 0) == std::vector<int>{1, 3, 0, 2});
}

TEST_CASE("evaluation contract") {
  ModelConfig mc = tiny_model();
  const BiFlowModel m(mc);
  const auto test = egoflow::testing::of_split(fixture().samples, Split::test);
  EvalConfig ec;
  ec.ks = {1, 2, 4};
  ec.steps = 3;
  const EvalReport a = evaluate(m, test, ec, "fp", "fp");
  const EvalReport b = evaluate(m, test, ec, "fp", "fp");
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.at_k.at(2).ade <= a.at_k.at(1).ade);
  CHECK(a.at_k.at(4).ade <= a.at_k.at(2).ade);
  CHECK(a.at_k.at(4).fde <= a.at_k.at(2).fde);
  CHECK(a.agents > 0);
  CHECK(a.to_json()["metrics"]["4"].contains("minFDE"));
  CHECK_THROWS_AS(evaluate(m, test, ec, "fp", "other"), ConfigError);
  ec.ks = {8};
  CHECK_THROWS_AS(evaluate(m, test, ec, "fp", "fp"), ConfigError);
}

TEST_CASE("world-frame candidates undo normalization and displacements") {
  const auto& s = fixture().samples.front();
  const int A = s.agents();
  CandidateSet c;
  c.K = 1;
  c.A = A;
  c.T = 12;
  const TrainExample ex = make_example(s);
  c.trajectories = ex.future;  // the true displacements
  c.logits = Matrix::Zero(1, A);
  const Matrix world = candidates_to_world(c, s);
  CHECK((world - s.future_clean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constant-velocity baseline") {
  SUBCASE("stationary") {
    const Matrix f = baseline_cv(line_history({1, 2}, {0, 0}), 12);
    for (int s = 0; s < 12; ++s) CHECK(point(f, 0, s) == Vec2{1, 2});
  }
  SUBCASE("uniform motion is exact") {
    const Matrix f = baseline_cv(line_history({0, 0}, {0.1, 0}), 12);
    for (int s = 0; s < 12; ++s) {
      CHECK(point(f, 0, s).x == doctest::Approx(0.1 * (8 + s)));
      CHECK(point(f, 0, s).y == 0.0);
    }
  }
  SUBCASE("noisy last step, hand computed") {
    ObservedHistory h = line_history({0, 0}, {0.1, 0});
    set_point(h.values, 0, 7, {0.8, 0.1});  // true (0.7, 0)
    const Matrix f = baseline_cv(h, 12);
    // v = (0.2, 0.1); step s lands at (0.8 + 0.2(s+1), 0.1(s+2)); truth (0.1(8+s), 0)
    // so both error components are 0.2 + 0.1s
    double ade = 0.0;
    for (int s = 0; s < 12; ++s) {
      CHECK(point(f, 0, s).x == doctest::Approx(0.8 + 0.2 * (s + 1)));
      ade += std::sqrt(2.0) * (0.2 + 0.1 * s);
    }
    Matrix truth(1, 24);
    for (int s = 0; s < 12; ++s) set_point(truth, 0, s, {0.1 * (8 + s), 0.0});
    CHECK(displacement(f, truth).ade == doctest::Approx(ade / 12));
    CHECK(displacement(f, truth).ade > 0.0);
  }
  SUBCASE("velocity spans a visibility gap") {
    ObservedHistory h = line_history({0, 0}, {0.1, 0});
    h.mask(0, 6) = h.mask(0, 7) = 0.0;
    fill_invisible(h.values, h.mask);
    const Matrix f = baseline_cv(h, 2);
    CHECK(point(f, 0, 0).x == doctest::Approx(0.8));
  }
  SUBCASE("fewer than two valid frames hold position") {
    ObservedHistory h = line_history({0, 0}, {0.1, 0});
    h.mask.setZero();
    h.mask(0, 3) = 1.0;
    fill_invisible(h.values, h.mask);
    const Matrix f = baseline_cv(h, 3);
    for (int s = 0; s < 3; ++s) CHECK(point(f, 0, s) == point(h.values, 0, 3));
  }
}

TEST_CASE("ablation grid rows") {
  const auto g = ablation_grid();
  REQUIRE(g.size() == 3);
  CHECK(g[0].name == "SI");
  CHECK(g[0].ablations == Ablations{true, false, false});
  CHECK(g[1].ablations == Ablations{true, true, false});
  CHECK(g[2].ablations == Ablations{true, true, true});

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.val_limit = 4;
  tc.val_steps = 2;
  EvalConfig ec;
  ec.ks = {1, 4};
  ec.steps = 2;
  const auto test = egoflow::testing::of_split(fixture().samples, Split::test);
  const auto results = ablate(first(8), {}, test, tiny_model(), tc, ec, {g[0], g[2]}, {0, 1}, "fp");
  REQUIRE(results.size() == 4);
  const auto j = ablation_to_json(results);
  CHECK(j["rows"].size() == 4);
  CHECK(j["rows"][0]["SE"] == false);
}

TEST_CASE("train and eval configs are strict JSON") {
  TrainConfig tc;
  CHECK(TrainConfig::from_json(tc.to_json()).to_json() == tc.to_json());
  auto j = tc.to_json();
  j["lrr"] = 1;
  CHECK_THROWS_AS(TrainConfig::from_json(j), ConfigError);
  EvalConfig ec;
  CHECK(EvalConfig::from_json(ec.to_json()).to_json() == ec.to_json());
  ec.ks = {0};
  CHECK_THROWS(ec.validate());
}
