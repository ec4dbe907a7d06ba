#include "egoflow/autodiff.hpp"

#include <algorithm>

namespace egoflow::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, grad_enabled_});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward back) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(back));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward back) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& p : parents) needs |= nodes_[static_cast<size_t>(p.id)].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(back) : Backward{}, needs});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::backward(Var root) {
  if (!grad_enabled_) throw Error("backward on a tape with gradients disabled");
  Node& r = nodes_[static_cast<size_t>(root.id)];
  if (r.value.size() != 1) throw Error("backward root must be a scalar");
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

Var matmul(Var a, Var b) {
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate_expr(b, a.value().transpose() * g);
  });
}

Var linear(Var x, Var w, Var b) {
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape->record(std::move(out), {x, w, b}, [x, w, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) t.accumulate_expr(x, g * w.value().transpose());
    if (t.requires_grad(w)) t.accumulate_expr(w, x.value().transpose() * g);
    if (t.requires_grad(b)) t.accumulate_expr(b, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var mul(Var a, Var b) {
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate_expr(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var add_row(Var a, Var row) {
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate_expr(row, g.colwise().sum());
  });
}

Var silu(Var a) {
  const Matrix& x = a.value();
  Matrix sig = (1.0 + (-x.array()).exp()).inverse().matrix();
  Matrix out = x.cwiseProduct(sig);
  return a.tape->record(std::move(out), {a}, [a, sig = std::move(sig)](Tape& t, const Matrix& g) {
    const auto& x = a.value().array();
    const auto s = sig.array();
    t.accumulate_expr(a, (g.array() * (s * (1.0 + x * (1.0 - s)))).matrix());
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& v = x.value();
  const Eigen::Index n = v.cols();
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mean = v.row(r).mean();
    const double var = (v.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
        if (t.requires_grad(gain)) t.accumulate_expr(gain, (g.cwiseProduct(xhat)).colwise().sum());
        if (t.requires_grad(bias)) t.accumulate_expr(bias, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        const double n = static_cast<double>(xhat.cols());
        Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
        Matrix dx(xhat.rows(), xhat.cols());
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const double m1 = dxhat.row(r).sum() / n;
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        t.accumulate(x, dx);
      });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols needs at least one part");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), parts, [ps](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (const Var& p : ps) {
      if (t.requires_grad(p)) t.accumulate_expr(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Matrix out = a.value().middleCols(start, count);
  return a.tape->record(std::move(out), {a}, [a, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Var gather_rows(Var a, std::shared_ptr<const std::vector<int>> index) {
  const auto& idx = *index;
  Matrix out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  return a.tape->record(std::move(out), {a}, [a, index](Tape& t, const Matrix& g) {
    Matrix acc = Matrix::Zero(a.rows(), a.cols());
    const auto& idx = *index;
    for (size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, acc);
  });
}

Var mean_rows(Var a) {
  Matrix out = a.value().colwise().mean();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const double inv = 1.0 / static_cast<double>(a.rows());
    t.accumulate_expr(a, g.replicate(a.rows(), 1) * inv);
  });
}

std::shared_ptr<const AttentionGroups> AttentionGroups::blocks(int count, int size) {
  auto g = std::make_shared<AttentionGroups>();
  g->count = count;
  g->size = size;
  for (int i = 0; i < count * size; ++i) g->rows.push_back(i);
  return g;
}

std::shared_ptr<const AttentionGroups> AttentionGroups::strided(int count, int size) {
  auto g = std::make_shared<AttentionGroups>();
  g->count = count;
  g->size = size;
  for (int i = 0; i < count; ++i) {
    for (int k = 0; k < size; ++k) g->rows.push_back(i + k * count);
  }
  return g;
}

namespace {

Matrix gather(const Matrix& m, const int* rows, int n, Eigen::Index col, Eigen::Index width) {
  Matrix out(n, width);
  for (int i = 0; i < n; ++i) out.row(i) = m.block(rows[i], col, 1, width);
  return out;
}

void scatter_add(Matrix& m, const int* rows, int n, Eigen::Index col, const Matrix& part) {
  for (int i = 0; i < n; ++i) m.block(rows[i], col, 1, part.cols()) += part.row(i);
}

}  // namespace

Var grouped_attention(Var q, Var k, Var v, std::shared_ptr<const AttentionGroups> groups, int heads) {
  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  const Eigen::Index width = Q.cols();
  if (width % heads != 0) throw Error("attention width must divide by the head count");
  const Eigen::Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int gs = groups->size;

  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(static_cast<size_t>(groups->count * heads));
  Matrix out = Matrix::Zero(Q.rows(), width);
  for (int g = 0; g < groups->count; ++g) {
    const int* rows = groups->rows.data() + static_cast<ptrdiff_t>(g) * gs;
    for (int h = 0; h < heads; ++h) {
      const Matrix qg = gather(Q, rows, gs, h * dh, dh);
      const Matrix kg = gather(K, rows, gs, h * dh, dh);
      const Matrix vg = gather(V, rows, gs, h * dh, dh);
      Matrix s = (qg * kg.transpose()) * scale;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      scatter_add(out, rows, gs, h * dh, s * vg);
      probs->push_back(std::move(s));
    }
  }
  return q.tape->record(std::move(out), {q, k, v}, [q, k, v, groups, heads, dh, scale, probs](Tape& t, const Matrix& g) {
    const Matrix& Q = q.value();
    const Matrix& K = k.value();
    const Matrix& V = v.value();
    Matrix dq = Matrix::Zero(Q.rows(), Q.cols());
    Matrix dk = Matrix::Zero(K.rows(), K.cols());
    Matrix dv = Matrix::Zero(V.rows(), V.cols());
    const int gs = groups->size;
    size_t p = 0;
    for (int gi = 0; gi < groups->count; ++gi) {
      const int* rows = groups->rows.data() + static_cast<ptrdiff_t>(gi) * gs;
      for (int h = 0; h < heads; ++h, ++p) {
        const Matrix& P = (*probs)[p];
        const Matrix qg = gather(Q, rows, gs, h * dh, dh);
        const Matrix kg = gather(K, rows, gs, h * dh, dh);
        const Matrix vg = gather(V, rows, gs, h * dh, dh);
        const Matrix go = gather(g, rows, gs, h * dh, dh);
        scatter_add(dv, rows, gs, h * dh, P.transpose() * go);
        const Matrix dp = go * vg.transpose();
        Matrix ds(P.rows(), P.cols());
        for (Eigen::Index r = 0; r < P.rows(); ++r) {
          const double inner = dp.row(r).dot(P.row(r));
          ds.row(r) = P.row(r).array() * (dp.row(r).array() - inner);
        }
        ds *= scale;
        scatter_add(dq, rows, gs, h * dh, ds * kg);
        scatter_add(dk, rows, gs, h * dh, ds.transpose() * qg);
      }
    }
    t.accumulate(q, dq);
    t.accumulate(k, dk);
    t.accumulate(v, dv);
  });
}

}  // namespace egoflow::ad
