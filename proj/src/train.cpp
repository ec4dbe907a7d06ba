#include "egoflow/train.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

namespace egoflow {

namespace {

// Runs fn(i) for i in [0, n), contiguous chunks per worker. Results must be
// written to per-index slots so the outcome is independent of thread count.
template <typename Fn>
void parallel_for(size_t n, const Fn& fn) {
  const size_t workers = std::min<size_t>(static_cast<size_t>(worker_threads()), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Matrix> snapshot(const ParamSet& params) {
  std::vector<Matrix> out;
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

void restore(ParamSet& params, const std::vector<Matrix>& values) {
  for (int i = 0; i < params.size(); ++i) params[i].value = values[static_cast<size_t>(i)];
}

void persist_batch(const std::filesystem::path& path, int epoch, long step, const std::vector<size_t>& batch,
                   const std::vector<BenchmarkSample>& data, double loss) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["loss"] = std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(std::to_string(loss));
  j["indices"] = batch;
  nlohmann::json samples = nlohmann::json::array();
  for (size_t i : batch) samples.push_back({{"scene_id", data[i].scene_id}, {"window_start", data[i].window_start}});
  j["samples"] = samples;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

}  // namespace

int worker_threads() {
  if (const char* env = std::getenv("EGOFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// ---------------------------------------------------------------- configs

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw ConfigError("train: epochs must be >= 0 and batch_size >= 1");
  if (!(lr > 0.0) || weight_decay < 0.0 || warmup_epochs < 0) throw ConfigError("train: invalid optimizer settings");
  if (lambda_recon < 0.0 || lambda_pred < 0.0) throw ConfigError("train: loss weights must be non-negative");
  if (val_steps < 1) throw ConfigError("train: val_steps must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},           {"batch_size", batch_size},     {"lr", lr},
          {"weight_decay", weight_decay}, {"warmup_epochs", warmup_epochs}, {"grad_clip", grad_clip},
          {"lambda_recon", lambda_recon}, {"lambda_pred", lambda_pred},   {"per_agent", per_agent},
          {"seed", seed},               {"val_steps", val_steps},       {"val_limit", val_limit}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  check_keys(j,
             {"epochs", "batch_size", "lr", "weight_decay", "warmup_epochs", "grad_clip", "lambda_recon",
              "lambda_pred", "per_agent", "seed", "val_steps", "val_limit"},
             "train");
  TrainConfig c;
  read_key(j, "epochs", c.epochs, "train");
  read_key(j, "batch_size", c.batch_size, "train");
  read_key(j, "lr", c.lr, "train");
  read_key(j, "weight_decay", c.weight_decay, "train");
  read_key(j, "warmup_epochs", c.warmup_epochs, "train");
  read_key(j, "grad_clip", c.grad_clip, "train");
  read_key(j, "lambda_recon", c.lambda_recon, "train");
  read_key(j, "lambda_pred", c.lambda_pred, "train");
  read_key(j, "per_agent", c.per_agent, "train");
  read_key(j, "seed", c.seed, "train");
  read_key(j, "val_steps", c.val_steps, "train");
  read_key(j, "val_limit", c.val_limit, "train");
  c.validate();
  return c;
}

void EvalConfig::validate() const {
  if (steps < 1) throw ConfigError("eval: steps must be positive");
  if (ks.empty()) throw ConfigError("eval: ks must not be empty");
  for (int k : ks) {
    if (k < 1) throw ConfigError("eval: every k must be positive");
  }
}

nlohmann::json EvalConfig::to_json() const { return {{"steps", steps}, {"seed", seed}, {"ks", ks}}; }

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"steps", "seed", "ks"}, "eval");
  EvalConfig c;
  read_key(j, "steps", c.steps, "eval");
  read_key(j, "seed", c.seed, "eval");
  read_key(j, "ks", c.ks, "eval");
  c.validate();
  return c;
}

// ---------------------------------------------------------------- optimizer

AdamW::AdamW(const ParamSet& params, double weight_decay, double beta1, double beta2, double eps)
    : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    decay_.push_back(p.value.rows() > 1);
  }
}

void AdamW::step(ParamSet& params, const Grads& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    const size_t s = static_cast<size_t>(i);
    Matrix& w = params[i].value;
    if (grads[s].size() != 0) {
      m_[s] = b1_ * m_[s] + (1.0 - b1_) * grads[s];
      v_[s] = b2_ * v_[s] + (1.0 - b2_) * grads[s].cwiseProduct(grads[s]);
    } else {
      m_[s] *= b1_;
      v_[s] *= b2_;
    }
    if (decay_[s] && wd_ > 0.0) w *= (1.0 - lr * wd_);
    w.array() -= lr * (m_[s].array() / c1) / ((v_[s].array() / c2).sqrt() + eps_);
  }
}

double learning_rate(const TrainConfig& config, long step, long total_steps, long steps_per_epoch) {
  const long warm = std::min<long>(static_cast<long>(config.warmup_epochs) * steps_per_epoch, total_steps);
  if (step < warm) return config.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const long span = total_steps - warm;
  if (span <= 0) return config.lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(span);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(Grads& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads) g *= s;
  }
  return norm;
}

// ---------------------------------------------------------------- training

TrainExample make_example(const BenchmarkSample& sample) {
  TrainExample ex;
  ex.history.values = apply_norm(sample.history.values, sample.norm);
  ex.history.mask = sample.history.mask;
  ex.history.ego_index = sample.history.ego_index;
  ex.past = apply_norm(sample.past_clean, sample.norm);
  ex.future = to_displacements(apply_norm(sample.future_clean, sample.norm), last_points(ex.history.values));
  return ex;
}

nlohmann::json TrainCurves::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch},
                  {"lr", e.lr},
                  {"loss", e.loss},
                  {"recon", e.recon},
                  {"pred", e.pred},
                  {"val_min_ade", e.val_min_ade}});
  }
  return {{"epochs", ep}, {"step_loss", step_loss}, {"best_epoch", best_epoch}, {"best_val", best_val}};
}

TrainResult train(const std::vector<BenchmarkSample>& train_set, const std::vector<BenchmarkSample>& val_set,
                  const ModelConfig& model_config, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) throw Error("train: empty training split");
  BiFlowModel model(model_config);
  if (hooks.on_init) hooks.on_init(model);
  const int K = model_config.modes;
  const int Tp = model_config.history_steps;
  const int Tf = model_config.future_steps;

  std::vector<TrainExample> examples;
  examples.reserve(train_set.size());
  for (const auto& s : train_set) {
    if (s.history.steps() != Tp || s.future_clean.cols() != 2 * Tf) throw Error("train: sample horizon mismatch");
    examples.push_back(make_example(s));
  }

  std::vector<BenchmarkSample> val_subset = val_set;
  if (config.val_limit > 0 && val_subset.size() > config.val_limit) val_subset.resize(config.val_limit);
  EvalConfig val_eval;
  val_eval.steps = config.val_steps;
  val_eval.seed = config.seed;
  val_eval.ks = {K};

  AdamW opt(model.params(), config.weight_decay);
  const size_t n = examples.size();
  const long per_epoch = static_cast<long>((n + static_cast<size_t>(config.batch_size) - 1) /
                                           static_cast<size_t>(config.batch_size));
  const long total = per_epoch * config.epochs;
  const LossWeights weights{config.lambda_recon, config.lambda_pred, config.per_agent, RegressionMode::wta};
  const TimeSampler times;

  TrainResult result{model, {}};
  std::vector<Matrix> best;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng = derive_rng(config.seed, 0x5u, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (long b = 0; b < per_epoch; ++b, ++step) {
      const size_t lo = static_cast<size_t>(b) * static_cast<size_t>(config.batch_size);
      const size_t hi = std::min(n, lo + static_cast<size_t>(config.batch_size));
      std::vector<size_t> batch(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));

      std::vector<Grads> grads(batch.size());
      std::vector<LossValue> losses(batch.size());
      parallel_for(batch.size(), [&](size_t i) {
        const size_t idx = batch[i];
        const TrainExample& ex = examples[idx];
        Rng rng = derive_rng(config.seed, epoch, idx);
        const FlowDraw draw = FlowDraw::sample(K, ex.history.agents(), Tp, Tf, times, rng);
        ad::Tape tape;
        Binder bind(tape, model.params());
        ad::Var total_var;
        losses[i] = model.loss(bind, ex, draw, weights, &total_var);
        tape.backward(total_var);
        grads[i] = bind.collect();
      });

      double loss = 0.0, recon = 0.0, pred = 0.0;
      Grads sum = zero_grads(model.params());
      for (size_t i = 0; i < batch.size(); ++i) {
        loss += losses[i].total;
        recon += losses[i].recon;
        pred += losses[i].pred;
        add_grads(sum, grads[i]);
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      loss *= inv;
      if (!std::isfinite(loss)) {
        if (hooks.failure_path) persist_batch(*hooks.failure_path, epoch, step, batch, train_set, loss);
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step),
                               epoch, step);
      }
      for (auto& g : sum) g *= inv;
      clip_grad_norm(sum, config.grad_clip);
      const double lr = learning_rate(config, step, total, per_epoch);
      opt.step(model.params(), sum, lr);

      result.curves.step_loss.push_back(loss);
      rec.lr = lr;
      rec.loss += loss * static_cast<double>(batch.size());
      rec.recon += recon;
      rec.pred += pred;
    }
    rec.loss /= static_cast<double>(n);
    rec.recon /= static_cast<double>(n);
    rec.pred /= static_cast<double>(n);

    if (!val_subset.empty()) {
      const EvalReport r = evaluate(model, val_subset, val_eval, "", "");
      rec.val_min_ade = r.at_k.at(K).ade;
      if (result.curves.best_epoch < 0 || rec.val_min_ade < result.curves.best_val) {
        result.curves.best_epoch = epoch;
        result.curves.best_val = rec.val_min_ade;
        best = snapshot(model.params());
      }
    }
    result.curves.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!best.empty()) restore(model.params(), best);
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------- metrics

Displacement displacement(const Matrix& pred, const Matrix& truth) {
  if (pred.cols() != truth.cols() || pred.cols() % 2 != 0 || pred.cols() == 0) {
    throw Error("displacement: shape mismatch");
  }
  const Eigen::Index T = pred.cols() / 2;
  Displacement d;
  for (Eigen::Index k = 0; k < T; ++k) {
    const double e = std::hypot(pred(0, 2 * k) - truth(0, 2 * k), pred(0, 2 * k + 1) - truth(0, 2 * k + 1));
    d.ade += e;
    if (k == T - 1) d.fde = e;
  }
  d.ade /= static_cast<double>(T);
  return d;
}

Displacement min_displacement(const Matrix& candidates, const Matrix& truth) {
  if (candidates.rows() < 1) throw Error("min_displacement: no candidates");
  Displacement best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (Eigen::Index k = 0; k < candidates.rows(); ++k) {
    const Displacement d = displacement(candidates.row(k), truth);
    best.ade = std::min(best.ade, d.ade);
    best.fde = std::min(best.fde, d.fde);
  }
  return best;
}

std::vector<int> rank_by_logit(const Matrix& logits, int agent) {
  std::vector<int> order(static_cast<size_t>(logits.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return logits(a, agent) > logits(b, agent); });
  return order;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, d] : at_k) metrics[std::to_string(k)] = {{"minADE", d.ade}, {"minFDE", d.fde}};
  return {{"metrics", metrics},
          {"samples", samples},
          {"agents", agents},
          {"model_fingerprint", model_fingerprint},
          {"data_fingerprint", data_fingerprint},
          {"steps", steps},
          {"seed", seed}};
}

Matrix candidates_to_world(const CandidateSet& c, const BenchmarkSample& sample) {
  const Matrix reference = last_points(apply_norm(sample.history.values, sample.norm));
  Matrix out(c.trajectories.rows(), c.trajectories.cols());
  for (int k = 0; k < c.K; ++k) {
    const Matrix rel = c.trajectories.middleRows(static_cast<Eigen::Index>(k) * c.A, c.A);
    out.middleRows(static_cast<Eigen::Index>(k) * c.A, c.A) =
        invert_norm(from_displacements(rel, reference), sample.norm);
  }
  return out;
}

std::vector<Displacement> topk_min_sums(const Matrix& world, const Matrix& logits, const Matrix& truth, int ego_index,
                                        std::span<const int> ks) {
  const int A = static_cast<int>(truth.rows());
  if (logits.cols() != A || world.rows() != logits.rows() * A || world.cols() != truth.cols()) {
    throw Error("topk_min_sums: shape mismatch");
  }
  std::vector<Displacement> sums(ks.size());
  for (int a = 0; a < A; ++a) {
    if (a == ego_index) continue;
    const auto order = rank_by_logit(logits, a);
    for (size_t q = 0; q < ks.size(); ++q) {
      const int k = ks[q];
      if (k < 1 || k > logits.rows()) throw Error("topk_min_sums: k outside [1, K]");
      Matrix chosen(k, world.cols());
      for (int j = 0; j < k; ++j) chosen.row(j) = world.row(static_cast<Eigen::Index>(order[static_cast<size_t>(j)]) * A + a);
      const Displacement d = min_displacement(chosen, truth.row(a));
      sums[q].ade += d.ade;
      sums[q].fde += d.fde;
    }
  }
  return sums;
}

EvalReport evaluate(const BiFlowModel& model, const std::vector<BenchmarkSample>& samples, const EvalConfig& config,
                    const std::string& model_data_fingerprint, const std::string& shard_data_fingerprint) {
  config.validate();
  if (model_data_fingerprint != shard_data_fingerprint) {
    throw ConfigError("data fingerprint mismatch: model trained on [" + model_data_fingerprint + "], shard is [" +
                      shard_data_fingerprint + "]");
  }
  const int K = model.config().modes;
  for (int k : config.ks) {
    if (k > K) throw ConfigError("eval: k=" + std::to_string(k) + " exceeds the model's " + std::to_string(K) + " modes");
  }
  const auto grid = logit_normal_grid(config.steps);

  struct Partial {
    std::vector<Displacement> sums;
    size_t agents = 0;
  };
  std::vector<Partial> partial(samples.size());
  parallel_for(samples.size(), [&](size_t i) {
    const BenchmarkSample& s = samples[i];
    if (s.history.steps() != model.config().history_steps || s.future_clean.cols() != 2 * model.config().future_steps) {
      throw Error("eval: sample horizon mismatch");
    }
    Rng rng = derive_rng(config.seed, i);
    const TrainExample ex = make_example(s);
    const CandidateSet c = model.sample_future(ex.history, K, grid, rng);
    const Matrix world = candidates_to_world(c, s);
    Partial& p = partial[i];
    p.sums = topk_min_sums(world, c.logits, s.future_clean, s.history.ego_index, config.ks);
    p.agents = static_cast<size_t>(c.A - 1);
  });

  EvalReport r;
  r.samples = samples.size();
  r.model_fingerprint = config_fingerprint(model.config().to_json());
  r.data_fingerprint = shard_data_fingerprint;
  r.steps = config.steps;
  r.seed = config.seed;
  std::vector<Displacement> total(config.ks.size());
  for (const auto& p : partial) {
    r.agents += p.agents;
    for (size_t q = 0; q < p.sums.size(); ++q) {
      total[q].ade += p.sums[q].ade;
      total[q].fde += p.sums[q].fde;
    }
  }
  for (size_t q = 0; q < config.ks.size(); ++q) {
    const double inv = r.agents ? 1.0 / static_cast<double>(r.agents) : 0.0;
    r.at_k[config.ks[q]] = {total[q].ade * inv, total[q].fde * inv};
  }
  return r;
}

Matrix baseline_cv(const ObservedHistory& history, int future_steps) {
  const int A = history.agents();
  const int Tp = history.steps();
  Matrix out(A, 2 * future_steps);
  for (int a = 0; a < A; ++a) {
    std::vector<int> valid;
    for (int k = 0; k < Tp; ++k) {
      if (history.mask(a, k) > 0.5) valid.push_back(k);
    }
    Vec2 anchor = point(history.values, a, Tp - 1);
    int anchor_step = Tp - 1;
    Vec2 v;
    if (!valid.empty()) {
      anchor_step = valid.back();
      anchor = point(history.values, a, anchor_step);
    }
    if (valid.size() >= 2) {
      const int prev = valid[valid.size() - 2];
      v = (anchor - point(history.values, a, prev)) * (1.0 / (anchor_step - prev));
    }
    for (int s = 0; s < future_steps; ++s) {
      set_point(out, a, s, anchor + v * static_cast<double>(Tp + s - anchor_step));
    }
  }
  return out;
}

EvalReport evaluate_baseline_cv(const std::vector<BenchmarkSample>& samples) {
  EvalReport r;
  r.samples = samples.size();
  r.model_fingerprint = "constant_velocity";
  Displacement total;
  for (const auto& s : samples) {
    const Matrix pred = baseline_cv(s.history, static_cast<int>(s.future_clean.cols() / 2));
    for (int a = 0; a < s.agents(); ++a) {
      if (a == s.history.ego_index) continue;
      const Displacement d = displacement(pred.row(a), s.future_clean.row(a));
      total.ade += d.ade;
      total.fde += d.fde;
      ++r.agents;
    }
  }
  const double inv = r.agents ? 1.0 / static_cast<double>(r.agents) : 0.0;
  r.at_k[1] = {total.ade * inv, total.fde * inv};
  return r;
}

// ---------------------------------------------------------------- ablation

std::vector<AblationRow> ablation_grid() {
  return {{"SI", {true, false, false}}, {"SI+EA", {true, true, false}}, {"SI+EA+SE", {true, true, true}}};
}

std::vector<AblationResult> ablate(const std::vector<BenchmarkSample>& train_set,
                                   const std::vector<BenchmarkSample>& val_set,
                                   const std::vector<BenchmarkSample>& test_set, const ModelConfig& model_config,
                                   const TrainConfig& train_config, const EvalConfig& eval_config,
                                   const std::vector<AblationRow>& rows, const std::vector<uint64_t>& seeds,
                                   const std::string& data_fingerprint) {
  std::vector<AblationResult> out;
  for (uint64_t seed : seeds) {
    for (const auto& row : rows) {
      ModelConfig mc = model_config;
      mc.ablations = row.ablations;
      mc.seed = seed;
      TrainConfig tc = train_config;
      tc.seed = seed;
      EvalConfig ec = eval_config;
      ec.seed = seed;
      TrainResult tr = train(train_set, val_set, mc, tc);
      out.push_back({row.name, row.ablations, seed, evaluate(tr.model, test_set, ec, data_fingerprint, data_fingerprint)});
    }
  }
  return out;
}

nlohmann::json ablation_to_json(const std::vector<AblationResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : results) {
    rows.push_back({{"name", r.name},
                    {"SI", r.ablations.social},
                    {"EA", r.ablations.anchor},
                    {"SE", r.ablations.shared_encoder},
                    {"seed", r.seed},
                    {"report", r.report.to_json()}});
  }
  return {{"rows", rows}};
}

}  // namespace egoflow
