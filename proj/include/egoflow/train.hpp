#pragma once

// Training loop, evaluation metrics, the constant-velocity baseline and the
// ablation grid.

#include "egoflow/bench.hpp"
#include "egoflow/biflow.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace egoflow {

struct TrainConfig {
  int epochs = 150;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int warmup_epochs = 5;
  double grad_clip = 1.0;  // global norm; <= 0 disables
  double lambda_recon = 1.0;
  double lambda_pred = 1.0;
  bool per_agent = true;
  uint64_t seed = 0;
  // Validation used for best-checkpoint selection.
  int val_steps = 10;
  size_t val_limit = 0;  // 0: whole split

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EvalConfig {
  int steps = 10;  // sampler grid size
  uint64_t seed = 0;
  std::vector<int> ks{1, 5, 10, 20};

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

// Decoupled weight decay Adam. Decay applies to matrices, not to bias or
// normalization vectors.
class AdamW {
 public:
  AdamW(const ParamSet& params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Missing gradients count as zero.
  void step(ParamSet& params, const Grads& grads, double lr);
  long steps() const { return t_; }

 private:
  std::vector<Matrix> m_, v_;
  std::vector<bool> decay_;
  double wd_, b1_, b2_, eps_;
  long t_ = 0;
};

// Linear warmup to the base rate, then cosine annealing to zero.
double learning_rate(const TrainConfig& config, long step, long total_steps, long steps_per_epoch);

// Scales grads in place so their global norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(Grads& grads, double max_norm);

TrainExample make_example(const BenchmarkSample& sample);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double recon = 0.0;
  double pred = 0.0;
  double val_min_ade = -1.0;  // @K=modes; negative without a validation split
};

struct TrainCurves {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_loss;
  int best_epoch = -1;
  double best_val = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  BiFlowModel model;  // best-val parameters, or the last epoch without validation
  TrainCurves curves;
};

// Thrown on a non-finite loss after the offending batch is persisted.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, int epoch, long step) : Error(what), epoch_(epoch), step_(step) {}
  int epoch() const { return epoch_; }
  long step() const { return step_; }

 private:
  int epoch_;
  long step_;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  // Where the offending batch is written on divergence.
  std::optional<std::filesystem::path> failure_path;
  // Test hook: replaces the model before the first step.
  std::function<void(BiFlowModel&)> on_init;
};

TrainResult train(const std::vector<BenchmarkSample>& train_set, const std::vector<BenchmarkSample>& val_set,
                  const ModelConfig& model_config, const TrainConfig& config, const TrainHooks& hooks = {});

// Worker threads for per-sample work; EGOFLOW_THREADS, default 1.
int worker_threads();

// ---------------------------------------------------------------- metrics

struct Displacement {
  double ade = 0.0;
  double fde = 0.0;
};

// Rows are 2T interleaved trajectories.
Displacement displacement(const Matrix& pred_row, const Matrix& truth_row);
// candidates: n x 2T; each minimum is taken independently.
Displacement min_displacement(const Matrix& candidates, const Matrix& truth_row);

// Candidate order by descending logit, ties to the lower index.
std::vector<int> rank_by_logit(const Matrix& logits, int agent);

// Top-k-by-logit minima summed over non-ego rows, one entry per k.
// world: (K*A) x 2T candidates; logits: K x A; truth: A x 2T.
std::vector<Displacement> topk_min_sums(const Matrix& world, const Matrix& logits, const Matrix& truth, int ego_index,
                                        std::span<const int> ks);

struct EvalReport {
  std::map<int, Displacement> at_k;
  size_t samples = 0;
  size_t agents = 0;
  std::string model_fingerprint;
  std::string data_fingerprint;
  int steps = 0;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// World-frame futures for every candidate: (K*A) x 2T_f.
Matrix candidates_to_world(const CandidateSet& c, const BenchmarkSample& sample);

// Samples modes(=K_max) futures per sample and scores the top-k by logit
// for every k in config.ks. Refuses data produced under a different
// fingerprint than the model was trained on.
EvalReport evaluate(const BiFlowModel& model, const std::vector<BenchmarkSample>& samples, const EvalConfig& config,
                    const std::string& model_data_fingerprint, const std::string& shard_data_fingerprint);

// Constant-velocity extrapolation of every row (world frame).
Matrix baseline_cv(const ObservedHistory& history, int future_steps);
EvalReport evaluate_baseline_cv(const std::vector<BenchmarkSample>& samples);

// ---------------------------------------------------------------- ablation

struct AblationRow {
  std::string name;
  Ablations ablations;
};

// SI only; SI + EA; SI + EA + SE.
std::vector<AblationRow> ablation_grid();

struct AblationResult {
  std::string name;
  Ablations ablations;
  uint64_t seed = 0;
  EvalReport report;
};

std::vector<AblationResult> ablate(const std::vector<BenchmarkSample>& train_set,
                                   const std::vector<BenchmarkSample>& val_set,
                                   const std::vector<BenchmarkSample>& test_set, const ModelConfig& model_config,
                                   const TrainConfig& train_config, const EvalConfig& eval_config,
                                   const std::vector<AblationRow>& rows, const std::vector<uint64_t>& seeds,
                                   const std::string& data_fingerprint);

nlohmann::json ablation_to_json(const std::vector<AblationResult>& results);

}  // namespace egoflow
