#include "egoflow/traj.hpp"

#include <string>

namespace egoflow {

void SceneTrack::validate() const {
  if (positions.empty()) throw Error("track " + std::to_string(agent_id) + " has no positions");
  if (!(dt > 0.0)) throw Error("track " + std::to_string(agent_id) + " has non-positive dt");
  for (const auto& p : positions) {
    if (!p.finite()) throw Error("track " + std::to_string(agent_id) + " has non-finite position");
  }
}

void ObservedHistory::validate() const {
  const int a = agents();
  if (a < 1 || steps() < 1) throw Error("observed history must have at least one agent and one step");
  if (mask.rows() != a || values.cols() != 2 * mask.cols()) {
    throw Error("observed history shape mismatch: values must have 2x the mask columns");
  }
  if (ego_index < 0 || ego_index >= a) throw Error("ego index out of range");
  for (int s = 0; s < steps(); ++s) {
    if (mask(ego_index, s) != 1.0) throw Error("ego row must be fully visible");
  }
  for (int r = 0; r < a; ++r) {
    for (int s = 0; s < steps(); ++s) {
      const double m = mask(r, s);
      if (m != 0.0 && m != 1.0) throw Error("mask entries must be binary");
      if (m == 1.0 && !point(values, r, s).finite()) throw Error("non-finite visible observation");
    }
  }
}

Matrix apply_norm(const Matrix& abs, const NormRecord& norm) {
  Matrix out(abs.rows(), abs.cols());
  for (Eigen::Index r = 0; r < abs.rows(); ++r) {
    for (Eigen::Index c = 0; c < abs.cols(); c += 2) {
      out(r, c) = (abs(r, c) - norm.origin.x) / norm.scale;
      out(r, c + 1) = (abs(r, c + 1) - norm.origin.y) / norm.scale;
    }
  }
  return out;
}

Matrix invert_norm(const Matrix& normalized, const NormRecord& norm) {
  Matrix out(normalized.rows(), normalized.cols());
  for (Eigen::Index r = 0; r < normalized.rows(); ++r) {
    for (Eigen::Index c = 0; c < normalized.cols(); c += 2) {
      out(r, c) = normalized(r, c) * norm.scale + norm.origin.x;
      out(r, c + 1) = normalized(r, c + 1) * norm.scale + norm.origin.y;
    }
  }
  return out;
}

NormRecord ego_norm_record(const ObservedHistory& history, double scale) {
  if (!(scale > 0.0)) throw Error("normalization scale must be positive");
  const Vec2 origin = point(history.values, history.ego_index, history.steps() - 1);
  if (!origin.finite()) throw Error("non-finite ego position at last observed step");
  return {origin, scale};
}

NormalizedScene normalize(const ObservedHistory& history, const Matrix& past, const Matrix& future,
                          const NormRecord& norm) {
  if (!(norm.scale > 0.0)) throw Error("normalization scale must be positive");
  if (past.rows() != history.agents() || future.rows() != history.agents()) {
    throw Error("history, past and future must share the agent count");
  }
  NormalizedScene out;
  out.history.values = apply_norm(history.values, norm);
  out.history.mask = history.mask;
  out.history.ego_index = history.ego_index;
  out.past = apply_norm(past, norm);
  out.future = apply_norm(future, norm);
  out.norm = norm;
  return out;
}

NormalizedScene normalize(const ObservedHistory& history, const Matrix& past, const Matrix& future,
                          double scale) {
  return normalize(history, past, future, ego_norm_record(history, scale));
}

Matrix to_displacements(const Matrix& abs, const Matrix& reference) {
  if (reference.rows() != abs.rows() || reference.cols() != 2) {
    throw Error("reference must hold one point per agent");
  }
  Matrix out(abs.rows(), abs.cols());
  for (Eigen::Index r = 0; r < abs.rows(); ++r) {
    double px = reference(r, 0);
    double py = reference(r, 1);
    for (Eigen::Index c = 0; c < abs.cols(); c += 2) {
      out(r, c) = abs(r, c) - px;
      out(r, c + 1) = abs(r, c + 1) - py;
      px = abs(r, c);
      py = abs(r, c + 1);
    }
  }
  return out;
}

Matrix from_displacements(const Matrix& rel, const Matrix& reference) {
  if (reference.rows() != rel.rows() || reference.cols() != 2) {
    throw Error("reference must hold one point per agent");
  }
  Matrix out(rel.rows(), rel.cols());
  for (Eigen::Index r = 0; r < rel.rows(); ++r) {
    double px = reference(r, 0);
    double py = reference(r, 1);
    for (Eigen::Index c = 0; c < rel.cols(); c += 2) {
      px += rel(r, c);
      py += rel(r, c + 1);
      out(r, c) = px;
      out(r, c + 1) = py;
    }
  }
  return out;
}

Matrix last_points(const Matrix& traj) {
  return traj.rightCols(2);
}

void fill_invisible(Matrix& values, const Matrix& mask) {
  const int steps = static_cast<int>(mask.cols());
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    int prev = -1;
    for (int s = 0; s < steps; ++s) {
      if (mask(r, s) == 0.0) continue;
      if (prev < 0) {
        for (int k = 0; k < s; ++k) set_point(values, r, k, point(values, r, s));
      } else if (s - prev > 1) {
        const Vec2 a = point(values, r, prev);
        const Vec2 b = point(values, r, s);
        for (int k = prev + 1; k < s; ++k) {
          const double w = static_cast<double>(k - prev) / (s - prev);
          set_point(values, r, k, a * (1.0 - w) + b * w);
        }
      }
      prev = s;
    }
    if (prev >= 0) {
      for (int k = prev + 1; k < steps; ++k) set_point(values, r, k, point(values, r, prev));
    }
  }
}

}  // namespace egoflow
