#pragma once

#include "egoflow/autodiff.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace egoflow {

struct Param {
  std::string name;  // "<group>.<path>"
  Matrix value;
};

class ParamSet {
 public:
  int add(std::string name, Matrix init);
  int index(std::string_view name) const;
  const Param& operator[](int i) const { return params_[static_cast<size_t>(i)]; }
  Param& operator[](int i) { return params_[static_cast<size_t>(i)]; }
  int size() const { return static_cast<int>(params_.size()); }
  size_t scalar_count() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  static std::string group_of(std::string_view name);

 private:
  std::vector<Param> params_;
};

// One gradient matrix per parameter; zero-size when no gradient reached it.
using Grads = std::vector<Matrix>;

Grads zero_grads(const ParamSet& params);
void add_grads(Grads& into, const Grads& g);

// Binds parameters to leaves of one tape on first use.
class Binder {
 public:
  Binder(ad::Tape& tape, const ParamSet& params);
  ad::Var operator()(int index);
  ad::Tape& tape() { return tape_; }
  Grads collect() const;

 private:
  ad::Tape& tape_;
  const ParamSet& params_;
  std::vector<int> var_ids_;
};

}  // namespace egoflow
