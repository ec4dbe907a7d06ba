#pragma once

// Flow-matching math shared by both streams.
//
// Candidate layout: K candidates for A agents are stored as a (K*A) x 2T
// matrix, row k*A + a; logits are K x A.

#include "egoflow/common.hpp"

#include <functional>
#include <span>
#include <vector>

namespace egoflow {

enum class Stream { history, future };

struct CandidateSet {
  int K = 0;
  int A = 0;
  int T = 0;
  Matrix trajectories;  // (K*A) x 2T
  Matrix logits;        // K x A
  Stream stream = Stream::future;

  auto candidate(int k, int a) const { return trajectories.row(static_cast<Eigen::Index>(k) * A + a); }
};

// (1 - t) x0 + t x1
Matrix interpolate(const Matrix& x0, const Matrix& x1, double t);

struct TimeSampler {
  enum class Kind { uniform, logit_normal };
  Kind kind = Kind::logit_normal;
  double mu = 0.0;
  double sigma = 1.0;

  // Strictly inside (0, 1).
  double sample(Rng& rng) const;
};

// Inference grid: logit-normal quantiles at levels i/steps (i < steps),
// clipped to [lo, hi]. The sampler appends the final jump to t = 1.
std::vector<double> logit_normal_grid(int steps, double mu = 0.0, double sigma = 1.0, double lo = 0.001,
                                      double hi = 0.95);
// t_i = i / steps.
std::vector<double> uniform_grid(int steps);

double standard_normal_quantile(double p);

// Clean-endpoint predictor evaluated at a (K*A) x 2T state and time t.
using EndpointModel = std::function<CandidateSet(const Matrix& state, double t)>;

// Euler integration of the x-prediction flow. At grid time t_i the implied
// velocity (x1_hat - x_t) / (1 - t_i) moves every candidate to t_{i+1}; the
// step after the last grid point lands on t = 1, i.e. on the last endpoint
// prediction. Returns the final state with the last logits.
CandidateSet euler_sample(const EndpointModel& model, Matrix initial_state, std::span<const double> grid);
// Same, starting from standard-normal noise of shape (K*A) x 2T.
CandidateSet euler_sample(const EndpointModel& model, int K, int A, int T, std::span<const double> grid,
                          Rng& rng);

enum class RegressionMode { wta, mean_all };

struct WtaResult {
  double loss = 0.0;
  double regression = 0.0;
  double cross_entropy = 0.0;
  std::vector<int> best;  // j* per agent (shared when selection is per scene)
  Matrix d_trajectories;  // dloss/dtrajectories, (K*A) x 2T
  Matrix d_logits;        // dloss/dlogits, K x A
};

// Winner-takes-all objective, averaged over agents: squared error of the
// best candidate plus cross-entropy of the logits against its index. Ties
// go to the lowest index. With per_agent == false one j* is chosen for the
// whole scene. mean_all regresses every candidate instead of the winner.
WtaResult wta_loss(const Matrix& trajectories, const Matrix& logits, const Matrix& target, int K,
                   bool per_agent = true, RegressionMode mode = RegressionMode::wta);

double total_loss(double recon, double pred, double lambda_recon, double lambda_pred);

}  // namespace egoflow
