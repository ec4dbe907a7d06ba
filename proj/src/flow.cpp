#include "egoflow/flow.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <limits>
#include <numbers>

namespace egoflow {

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw Error("interpolate: shape mismatch");
  if (t == 0.0) return x0;
  if (t == 1.0) return x1;
  return (1.0 - t) * x0 + t * x1;
}

double TimeSampler::sample(Rng& rng) const {
  if (kind == Kind::uniform) {
    // (0, 1) open interval
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    return u(rng);
  }
  if (!(sigma > 0.0)) throw Error("logit-normal sigma must be positive");
  std::normal_distribution<double> n(mu, sigma);
  const double t = sigmoid(n(rng));
  return std::clamp(t, 1e-12, 1.0 - 1e-12);
}

double standard_normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * p - 1.0);
}

std::vector<double> logit_normal_grid(int steps, double mu, double sigma, double lo, double hi) {
  if (steps < 1) throw Error("sampler needs at least one step");
  std::vector<double> grid;
  grid.reserve(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double level = static_cast<double>(i) / steps;
    const double z = standard_normal_quantile(level);
    const double t = std::isinf(z) ? 0.0 : sigmoid(mu + sigma * z);
    grid.push_back(std::clamp(t, lo, hi));
  }
  return grid;
}

std::vector<double> uniform_grid(int steps) {
  if (steps < 1) throw Error("sampler needs at least one step");
  std::vector<double> grid;
  for (int i = 0; i < steps; ++i) grid.push_back(static_cast<double>(i) / steps);
  return grid;
}

CandidateSet euler_sample(const EndpointModel& model, Matrix state, std::span<const double> grid) {
  if (grid.empty()) throw Error("sampler needs at least one step");
  for (size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    if (!(t >= 0.0 && t < 1.0)) throw Error("interior grid times must lie in [0, 1)");
    CandidateSet pred = model(state, t);
    // The jump from the last grid time to t = 1 lands exactly on the endpoint prediction.
    if (i + 1 == grid.size()) return pred;
    const double next = grid[i + 1];
    state += ((next - t) / (1.0 - t)) * (pred.trajectories - state);
  }
  throw Error("unreachable: empty grid");
}

CandidateSet euler_sample(const EndpointModel& model, int K, int A, int T, std::span<const double> grid,
                          Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix state(static_cast<Eigen::Index>(K) * A, 2 * T);
  for (Eigen::Index i = 0; i < state.size(); ++i) state.data()[i] = n(rng);
  return euler_sample(model, std::move(state), grid);
}

WtaResult wta_loss(const Matrix& trajectories, const Matrix& logits, const Matrix& target, int K, bool per_agent,
                   RegressionMode mode) {
  if (K < 1) throw Error("wta_loss needs K >= 1");
  const auto A = target.rows();
  if (trajectories.rows() != K * A || trajectories.cols() != target.cols() || logits.rows() != K ||
      logits.cols() != A) {
    throw Error("wta_loss: shape mismatch");
  }
  WtaResult r;
  r.d_trajectories = Matrix::Zero(trajectories.rows(), trajectories.cols());
  r.d_logits = Matrix::Zero(K, A);

  Matrix sq(K, A);
  for (int k = 0; k < K; ++k) {
    for (Eigen::Index a = 0; a < A; ++a) sq(k, a) = (trajectories.row(k * A + a) - target.row(a)).squaredNorm();
  }
  r.best.assign(static_cast<size_t>(A), 0);
  if (per_agent) {
    for (Eigen::Index a = 0; a < A; ++a) {
      int best = 0;
      for (int k = 1; k < K; ++k) {
        if (sq(k, a) < sq(best, a)) best = k;
      }
      r.best[static_cast<size_t>(a)] = best;
    }
  } else {
    int best = 0;
    for (int k = 1; k < K; ++k) {
      if (sq.row(k).sum() < sq.row(best).sum()) best = k;
    }
    std::fill(r.best.begin(), r.best.end(), best);
  }

  const double inv_a = 1.0 / static_cast<double>(A);
  for (Eigen::Index a = 0; a < A; ++a) {
    const int j = r.best[static_cast<size_t>(a)];
    if (mode == RegressionMode::wta) {
      r.regression += sq(j, a) * inv_a;
      r.d_trajectories.row(j * A + a) = (2.0 * inv_a) * (trajectories.row(j * A + a) - target.row(a));
    } else {
      for (int k = 0; k < K; ++k) {
        r.regression += sq(k, a) * inv_a / K;
        r.d_trajectories.row(k * A + a) = (2.0 * inv_a / K) * (trajectories.row(k * A + a) - target.row(a));
      }
    }
    // log-softmax over the K logits of this agent
    const double mx = logits.col(a).maxCoeff();
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits(k, a) - mx);
    const double log_z = mx + std::log(z);
    r.cross_entropy += (log_z - logits(j, a)) * inv_a;
    for (int k = 0; k < K; ++k) {
      r.d_logits(k, a) = (std::exp(logits(k, a) - log_z) - (k == j ? 1.0 : 0.0)) * inv_a;
    }
  }
  r.loss = r.regression + r.cross_entropy;
  return r;
}

double total_loss(double recon, double pred, double lambda_recon, double lambda_pred) {
  if (lambda_recon < 0.0 || lambda_pred < 0.0) throw Error("loss weights must be non-negative");
  return lambda_recon * recon + lambda_pred * pred;
}

}  // namespace egoflow
