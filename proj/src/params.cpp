#include "egoflow/params.hpp"

namespace egoflow {

int ParamSet::add(std::string name, Matrix init) {
  for (const auto& p : params_) {
    if (p.name == name) throw Error("duplicate parameter " + name);
  }
  params_.push_back({std::move(name), std::move(init)});
  return static_cast<int>(params_.size()) - 1;
}

int ParamSet::index(std::string_view name) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  throw Error("unknown parameter " + std::string(name));
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

std::string ParamSet::group_of(std::string_view name) {
  return std::string(name.substr(0, name.find('.')));
}

Grads zero_grads(const ParamSet& params) {
  Grads g;
  g.reserve(static_cast<size_t>(params.size()));
  for (const auto& p : params) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

void add_grads(Grads& into, const Grads& g) {
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i].size() == 0) continue;
    if (into[i].size() == 0) {
      into[i] = g[i];
    } else {
      into[i] += g[i];
    }
  }
}

Binder::Binder(ad::Tape& tape, const ParamSet& params)
    : tape_(tape), params_(params), var_ids_(static_cast<size_t>(params.size()), -1) {}

ad::Var Binder::operator()(int index) {
  int& id = var_ids_[static_cast<size_t>(index)];
  if (id < 0) id = tape_.parameter(params_[index].value).id;
  return {&tape_, id};
}

Grads Binder::collect() const {
  Grads g(var_ids_.size());
  for (size_t i = 0; i < var_ids_.size(); ++i) {
    if (var_ids_[i] >= 0) g[i] = tape_.grad({const_cast<ad::Tape*>(&tape_), var_ids_[i]});
  }
  return g;
}

}  // namespace egoflow
