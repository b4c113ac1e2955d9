#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pstory/tensor.hpp"

namespace pstory {

// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

enum class Op : std::uint8_t {
  Leaf,
  MatVec,
  MatTVec,
  Add,
  Sub,
  Mul,
  Scale,
  Concat,
  Slice,
  Tanh,
  Sigmoid,
  Relu,
  Gather,
  Softmax,
  SoftmaxCE,
  SigmoidBCE,
  MaxOver,
  Dropout,
  Sum,
  WeightedSum,
};

const char* op_name(Op op);

// Reverse-mode recording of primitive operations. Nodes are appended in
// evaluation order, so the node list is always a topological order and
// backward() is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Leaf that reads `ref` (not copied). `ref` must outlive the tape.
  Var leaf_ref(const Tensor& ref, bool requires_grad);
  // Owned leaf without gradient.
  Var constant(Tensor value);
  // Owned leaf that receives a gradient (handy for input sensitivities).
  Var input(Tensor value);

  Var matvec(Var w, Var x);    // W x
  Var matvec_t(Var w, Var x);  // W^T x
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var gather(Var table, std::size_t row);
  Var softmax(Var logits);
  Var softmax_ce(Var logits, std::size_t target);
  Var sigmoid_bce(Var logit, int label);
  Var max_over(std::span<const Var> items);  // elementwise max across items
  Var dropout(Var a, Tensor mask);
  Var sum(Var a);
  Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() root w.r.t. v; zeros if v received none.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  // Reverse sweep from a scalar root. Leaves with requires_grad receive
  // accumulated gradients; prior gradients are discarded.
  void backward(Var root);

  // Recomputes every node in recorded order, re-reading referenced leaves.
  // Dropout masks and integer arguments are reused as recorded.
  void replay();

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    std::size_t index = 0;  // row, target, slice offset
    double scalar = 0.0;    // scale factor, label
    std::vector<double> aux;  // dropout mask, softmax probabilities, weights
    std::vector<std::uint32_t> argmax;
  };

  Var push(Node node);
  void compute(Node& node);
  const Tensor& val(std::uint32_t id) const;
  Tensor& grad_buffer(std::uint32_t id);
  void propagate(std::uint32_t id);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace pstory
