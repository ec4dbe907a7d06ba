#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every op of one forward pass. Leaves created with
// `parameter` receive gradients after `backward`. With gradients disabled,
// ops only compute values.

#include "egoflow/common.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace egoflow::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Matrix value);
  Var parameter(Matrix value);

  bool grad_enabled() const { return grad_enabled_; }
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  const Matrix& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  // Zero-size until a gradient reaches the node.
  const Matrix& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

  // Seeds d(root)/d(root) = 1; root must be 1 x 1.
  void backward(Var root);

  // Records an op; `back` receives the upstream gradient of the new node.
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;
  Var record(Matrix value, std::initializer_list<Var> parents, Backward back);
  Var record(Matrix value, std::span<const Var> parents, Backward back);

  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g) {
    Node& n = nodes_[static_cast<size_t>(v.id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

Var matmul(Var a, Var b);
// x W + b with b a 1 x out row broadcast over rows.
Var linear(Var x, Var w, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);
Var silu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var gather_rows(Var a, std::shared_ptr<const std::vector<int>> index);
Var mean_rows(Var a);

// Groups of rows that attend to each other; every group has the same size.
struct AttentionGroups {
  int count = 0;
  int size = 0;
  std::vector<int> rows;  // count * size row indices, group-major

  // Rows [g*size, (g+1)*size) for each g: contiguous blocks.
  static std::shared_ptr<const AttentionGroups> blocks(int count, int size);
  // Rows {i, i+stride, i+2*stride, ...}: one group per residue.
  static std::shared_ptr<const AttentionGroups> strided(int count, int size);
};

// Softmax attention per group and head, q/k/v of width heads * head_dim.
Var grouped_attention(Var q, Var k, Var v, std::shared_ptr<const AttentionGroups> groups, int heads);

}  // namespace egoflow::ad
