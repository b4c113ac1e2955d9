#include "pstory/params.hpp"

#include <cmath>

#include "pstory/error.hpp"
#include "pstory/rng.hpp"

namespace pstory {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  index_.emplace(name, values_.size());
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return ParamId{values_.size() - 1};
}

ParamId ParamStore::add_uniform(std::string name, Shape shape, std::size_t fan_in,
                                std::uint64_t seed) {
  Rng rng(seed, name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.span()) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(t));
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

ParamId ParamStore::id(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return ParamId{it->second};
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  return a.names_ == b.names_ && a.values_ == b.values_;
}

Gradients::Gradients(const ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    names_.push_back(params.name(i));
    grads_.emplace_back(params.at(i).shape());
  }
}

const Tensor& Gradients::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return grads_[i];
  }
  throw ContractError("no gradient for parameter: " + std::string(name));
}

void Gradients::add_scaled(const Gradients& other, double factor) {
  if (other.size() != size()) throw DimensionError("gradient sets differ in size");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].span();
    auto src = other.grads_[i].span();
    if (dst.size() != src.size()) {
      throw DimensionError("gradient " + names_[i] + ": " + shape_str(grads_[i].shape()) +
                           " vs " + shape_str(other.grads_[i].shape()));
    }
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += factor * src[j];
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (auto& v : g.span()) v *= factor;
  }
}

Binding::Binding(Tape& tape, const ParamStore& params, bool trainable)
    : tape_(&tape), params_(&params), trainable_(trainable), vars_(params.size()) {}

Var Binding::operator()(ParamId id) {
  auto& slot = vars_.at(id.index);
  if (!slot) slot = tape_->leaf_ref((*params_)[id], trainable_);
  return *slot;
}

Gradients Binding::gradients() const {
  Gradients out(*params_);
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i] && tape_->has_grad(*vars_[i])) out.at(i) = tape_->grad(*vars_[i]);
  }
  return out;
}

Gradients backward(Tape& tape, Var root, const Binding& binding) {
  tape.backward(root);
  return binding.gradients();
}

}  // namespace pstory
