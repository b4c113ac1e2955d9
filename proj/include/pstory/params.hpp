#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pstory/tape.hpp"
#include "pstory/tensor.hpp"

namespace pstory {

// Index of a parameter inside its ParamStore.
struct ParamId {
  std::size_t index = 0;
};

// Named, ordered parameter collection. Insertion order is the canonical
// order for checkpoints and optimizer state.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);
  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a stream keyed by name, so
  // a parameter's initial value does not depend on what else is registered.
  ParamId add_uniform(std::string name, Shape shape, std::size_t fan_in, std::uint64_t seed);

  std::size_t size() const { return values_.size(); }
  bool contains(std::string_view name) const;
  ParamId id(std::string_view name) const;

  const std::string& name(ParamId id) const { return names_.at(id.index); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor& operator[](ParamId id) { return values_.at(id.index); }
  const Tensor& operator[](ParamId id) const { return values_.at(id.index); }
  Tensor& operator[](std::string_view name) { return values_[id(name).index]; }
  const Tensor& operator[](std::string_view name) const { return values_[id(name).index]; }
  Tensor& at(std::size_t i) { return values_.at(i); }
  const Tensor& at(std::size_t i) const { return values_.at(i); }

  std::size_t scalar_count() const;
  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Gradients aligned with a ParamStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& params);

  std::size_t size() const { return grads_.size(); }
  Tensor& at(std::size_t i) { return grads_.at(i); }
  const Tensor& at(std::size_t i) const { return grads_.at(i); }
  const Tensor& operator[](std::string_view name) const;
  const std::string& name(std::size_t i) const { return names_.at(i); }

  void add_scaled(const Gradients& other, double factor);
  void scale(double factor);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> grads_;
};

// A ParamStore attached to one tape. Each parameter becomes at most one leaf
// node, created on first use and reading the store's tensor in place.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& params, bool trainable);

  Var operator()(ParamId id);
  Var operator()(std::string_view name) { return (*this)(params_->id(name)); }
  Tape& tape() { return *tape_; }
  const ParamStore& params() const { return *params_; }
  bool trainable() const { return trainable_; }

  // Gradients accumulated by the tape's last backward(); zero where unused.
  Gradients gradients() const;

 private:
  Tape* tape_;
  const ParamStore* params_;
  bool trainable_;
  std::vector<std::optional<Var>> vars_;
};

// Runs tape.backward(root) and collects parameter gradients for `binding`.
Gradients backward(Tape& tape, Var root, const Binding& binding);

}  // namespace pstory
