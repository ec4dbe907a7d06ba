#pragma once

// Trajectory types and coordinate conventions shared by every stage.
//
// Layout: a trajectory matrix has one row per agent and (x, y) interleaved
// along time, so a row of T steps has 2T columns. Visibility masks have one
// column per step. The ego agent is the last row.

#include "egoflow/common.hpp"

#include <vector>

namespace egoflow {

struct SceneTrack {
  int agent_id = 0;
  std::vector<Vec2> positions;  // meters, world frame
  int t0 = 0;
  double dt = 0.4;

  int end_frame() const { return t0 + static_cast<int>(positions.size()); }
  bool covers(int frame) const { return frame >= t0 && frame < end_frame(); }
  Vec2 at(int frame) const { return positions.at(static_cast<size_t>(frame - t0)); }
  void validate() const;
};

struct ObservedHistory {
  Matrix values;  // A x 2T_p
  Matrix mask;    // A x T_p, entries in {0, 1}
  int ego_index = 0;

  int agents() const { return static_cast<int>(values.rows()); }
  int steps() const { return static_cast<int>(mask.cols()); }
  void validate() const;
};

struct NormRecord {
  Vec2 origin;
  double scale = 1.0;

  bool operator==(const NormRecord&) const = default;
};

inline Vec2 point(const Matrix& m, int row, int step) {
  return {m(row, 2 * step), m(row, 2 * step + 1)};
}
inline void set_point(Matrix& m, int row, int step, Vec2 p) {
  m(row, 2 * step) = p.x;
  m(row, 2 * step + 1) = p.y;
}

// (p - origin) / scale applied to every interleaved point.
Matrix apply_norm(const Matrix& abs, const NormRecord& norm);
Matrix invert_norm(const Matrix& normalized, const NormRecord& norm);

struct NormalizedScene {
  ObservedHistory history;
  Matrix past;
  Matrix future;
  NormRecord norm;
};

// Ego-relative normalization: origin is the ego's last observed position.
// Throws if that position is not finite.
NormRecord ego_norm_record(const ObservedHistory& history, double scale);

NormalizedScene normalize(const ObservedHistory& history, const Matrix& past, const Matrix& future,
                          const NormRecord& norm);
NormalizedScene normalize(const ObservedHistory& history, const Matrix& past, const Matrix& future,
                          double scale);

// output[k] = abs[k] - abs[k-1] with abs[-1] := reference (A x 2, one point per row).
Matrix to_displacements(const Matrix& abs, const Matrix& reference);
Matrix from_displacements(const Matrix& rel, const Matrix& reference);

// Last step of every row, as an A x 2 reference matrix.
Matrix last_points(const Matrix& traj);

// Fills masked-out steps: linear interpolation between visible neighbours,
// nearest visible value at the edges. A row with no visible step is left as is.
void fill_invisible(Matrix& values, const Matrix& mask);

}  // namespace egoflow
