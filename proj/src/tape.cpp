#include "pstory/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pstory/error.hpp"

namespace pstory {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatVec: return "matvec";
    case Op::MatTVec: return "matvec_t";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Gather: return "gather";
    case Op::Softmax: return "softmax";
    case Op::SoftmaxCE: return "softmax_ce";
    case Op::SigmoidBCE: return "sigmoid_bce";
    case Op::MaxOver: return "max_over";
    case Op::Dropout: return "dropout";
    case Op::Sum: return "sum";
    case Op::WeightedSum: return "weighted_sum";
  }
  return "?";
}

namespace {

double sigmoid_scalar(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Softmax probabilities of `logits` written into `out`; returns log-sum-exp.
double stable_softmax(const Tensor& logits, std::vector<double>& out) {
  const double* z = logits.data();
  const std::size_t n = logits.size();
  const double mx = *std::max_element(z, z + n);
  out.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(z[i] - mx);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return mx + std::log(total);
}

}  // namespace

Var Tape::push(Node node) {
  for (auto in : node.inputs) {
    if (nodes_[in].requires_grad) {
      node.requires_grad = true;
      break;
    }
  }
  compute(node);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractError("tape: invalid variable handle");
  return nodes_[v.id];
}

const Tensor& Tape::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

const Tensor& Tape::value(Var v) const {
  node(v);
  return val(v.id);
}

Var Tape::leaf_ref(const Tensor& ref, bool requires_grad) {
  Node n;
  n.ref = &ref;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (W.rank() != 2 || X.rank() != 1 || W.cols() != X.size()) {
    throw DimensionError("matvec: cannot apply " + shape_str(W.shape()) + " to " +
                         shape_str(X.shape()));
  }
  Node n;
  n.op = Op::MatVec;
  n.inputs = {w.id, x.id};
  return push(std::move(n));
}

Var Tape::matvec_t(Var w, Var x) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (W.rank() != 2 || X.rank() != 1 || W.rows() != X.size()) {
    throw DimensionError("matvec_t: cannot apply transpose of " + shape_str(W.shape()) +
                         " to " + shape_str(X.shape()));
  }
  Node n;
  n.op = Op::MatTVec;
  n.inputs = {w.id, x.id};
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  node(a);
  Node n;
  n.op = Op::Scale;
  n.inputs = {a.id};
  n.scalar = factor;
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw EmptyInputError("concat: no inputs");
  Node n;
  n.op = Op::Concat;
  for (auto p : parts) {
    if (value(p).rank() != 1) {
      throw DimensionError("concat: expects vectors, got " + shape_str(value(p).shape()));
    }
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  const Tensor& A = value(a);
  if (A.rank() != 1 || length == 0 || offset + length > A.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                         ") out of " + shape_str(A.shape()));
  }
  Node n;
  n.op = Op::Slice;
  n.inputs = {a.id};
  n.index = offset;
  n.scalar = static_cast<double>(length);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  node(a);
  Node n;
  n.op = Op::Tanh;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  node(a);
  Node n;
  n.op = Op::Sigmoid;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  node(a);
  Node n;
  n.op = Op::Relu;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::gather(Var table, std::size_t row) {
  const Tensor& T = value(table);
  if (T.rank() != 2) throw DimensionError("gather: table must be a matrix, got " + shape_str(T.shape()));
  if (row >= T.rows()) {
    throw IndexError("gather: row " + std::to_string(row) + " out of range for table " +
                     shape_str(T.shape()));
  }
  Node n;
  n.op = Op::Gather;
  n.inputs = {table.id};
  n.index = row;
  return push(std::move(n));
}

Var Tape::softmax(Var logits) {
  if (value(logits).rank() != 1) throw DimensionError("softmax: expects a vector");
  Node n;
  n.op = Op::Softmax;
  n.inputs = {logits.id};
  return push(std::move(n));
}

Var Tape::softmax_ce(Var logits, std::size_t target) {
  const Tensor& L = value(logits);
  if (L.rank() != 1) throw DimensionError("softmax_ce: expects a vector");
  if (target >= L.size()) {
    throw IndexError("softmax_ce: target " + std::to_string(target) + " out of " +
                     std::to_string(L.size()) + " classes");
  }
  Node n;
  n.op = Op::SoftmaxCE;
  n.inputs = {logits.id};
  n.index = target;
  return push(std::move(n));
}

Var Tape::sigmoid_bce(Var logit, int label) {
  if (value(logit).size() != 1) {
    throw DimensionError("sigmoid_bce: logit must be a scalar, got " + shape_str(value(logit).shape()));
  }
  if (label != 0 && label != 1) throw ContractError("sigmoid_bce: label must be 0 or 1");
  Node n;
  n.op = Op::SigmoidBCE;
  n.inputs = {logit.id};
  n.scalar = label;
  return push(std::move(n));
}

Var Tape::max_over(std::span<const Var> items) {
  if (items.empty()) throw EmptyInputError("max_over: no inputs");
  Node n;
  n.op = Op::MaxOver;
  const Tensor& first = value(items[0]);
  for (auto it : items) {
    require_same_shape(first, value(it), "max_over");
    n.inputs.push_back(it.id);
  }
  return push(std::move(n));
}

Var Tape::dropout(Var a, Tensor mask) {
  require_same_shape(value(a), mask, "dropout");
  Node n;
  n.op = Op::Dropout;
  n.inputs = {a.id};
  n.aux = mask.values();
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  node(a);
  Node n;
  n.op = Op::Sum;
  n.inputs = {a.id};
  return push(std::move(n));
}

Var Tape::weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty()) throw EmptyInputError("weighted_sum: no inputs");
  if (scalars.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                         std::to_string(weights.size()) + " weights");
  }
  Node n;
  n.op = Op::WeightedSum;
  for (auto s : scalars) {
    if (value(s).size() != 1) throw DimensionError("weighted_sum: terms must be scalars");
    n.inputs.push_back(s.id);
  }
  n.aux.assign(weights.begin(), weights.end());
  return push(std::move(n));
}

void Tape::compute(Node& n) {
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::MatVec: {
      const Tensor& W = val(n.inputs[0]);
      const Tensor& x = val(n.inputs[1]);
      const std::size_t m = W.rows(), k = W.cols();
      n.value = Tensor({m});
      const double* w = W.data();
      const double* xv = x.data();
      double* y = n.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* wr = w + i * k;
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += wr[j] * xv[j];
        y[i] = acc;
      }
      break;
    }
    case Op::MatTVec: {
      const Tensor& W = val(n.inputs[0]);
      const Tensor& x = val(n.inputs[1]);
      const std::size_t m = W.rows(), k = W.cols();
      n.value = Tensor({k});
      double* y = n.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wr = W.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) y[j] += wr[j] * xi;
      }
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = val(n.inputs[0]);
      const Tensor& b = val(n.inputs[1]);
      n.value = Tensor(a.shape());
      double* y = n.value.data();
      for (std::size_t i = 0; i < a.size(); ++i) {
        y[i] = n.op == Op::Add ? a[i] + b[i] : n.op == Op::Sub ? a[i] - b[i] : a[i] * b[i];
      }
      break;
    }
    case Op::Scale: {
      const Tensor& a = val(n.inputs[0]);
      n.value = Tensor(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * n.scalar;
      break;
    }
    case Op::Concat: {
      std::size_t total = 0;
      for (auto in : n.inputs) total += val(in).size();
      n.value = Tensor({total});
      double* y = n.value.data();
      for (auto in : n.inputs) {
        const Tensor& p = val(in);
        y = std::copy(p.data(), p.data() + p.size(), y);
      }
      break;
    }
    case Op::Slice: {
      const Tensor& a = val(n.inputs[0]);
      const auto len = static_cast<std::size_t>(n.scalar);
      n.value = Tensor({len});
      std::copy_n(a.data() + n.index, len, n.value.data());
      break;
    }
    case Op::Tanh:
    case Op::Sigmoid:
    case Op::Relu: {
      const Tensor& a = val(n.inputs[0]);
      n.value = Tensor(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        n.value[i] = n.op == Op::Tanh      ? std::tanh(a[i])
                     : n.op == Op::Sigmoid ? sigmoid_scalar(a[i])
                                           : (a[i] > 0.0 ? a[i] : 0.0);
      }
      break;
    }
    case Op::Gather: {
      const Tensor& T = val(n.inputs[0]);
      n.value = Tensor::vector(T.row(n.index));
      break;
    }
    case Op::Softmax: {
      stable_softmax(val(n.inputs[0]), n.aux);
      n.value = Tensor({n.aux.size()}, n.aux);
      break;
    }
    case Op::SoftmaxCE: {
      const Tensor& z = val(n.inputs[0]);
      const double lse = stable_softmax(z, n.aux);
      n.value = Tensor::scalar(lse - z[n.index]);
      break;
    }
    case Op::SigmoidBCE: {
      const double z = val(n.inputs[0])[0];
      const double y = n.scalar;
      n.value = Tensor::scalar(std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
      break;
    }
    case Op::MaxOver: {
      const Tensor& first = val(n.inputs[0]);
      n.value = first;
      n.argmax.assign(first.size(), 0);
      for (std::uint32_t k = 1; k < n.inputs.size(); ++k) {
        const Tensor& t = val(n.inputs[k]);
        for (std::size_t i = 0; i < t.size(); ++i) {
          if (t[i] > n.value[i]) {
            n.value[i] = t[i];
            n.argmax[i] = k;
          }
        }
      }
      break;
    }
    case Op::Dropout: {
      const Tensor& a = val(n.inputs[0]);
      n.value = Tensor(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = a[i] * n.aux[i];
      break;
    }
    case Op::Sum: {
      const Tensor& a = val(n.inputs[0]);
      double acc = 0.0;
      for (double v : a.values()) acc += v;
      n.value = Tensor::scalar(acc);
      break;
    }
    case Op::WeightedSum: {
      double acc = 0.0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) acc += n.aux[k] * val(n.inputs[k])[0];
      n.value = Tensor::scalar(acc);
      break;
    }
  }
  if (!n.value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name(n.op));
  }
}

void Tape::replay() {
  for (auto& n : nodes_) compute(n);
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(val(id).shape());
  return n.grad;
}

bool Tape::has_grad(Var v) const { return !node(v).grad.empty(); }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(val(v.id).shape());
  return n.grad;
}

void Tape::backward(Var root) {
  const Node& r = node(root);
  if (r.value.size() != 1 || r.op == Op::Leaf) {
    throw ContractError("backward: root must be a computed scalar, got shape " +
                        shape_str(val(root.id).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!r.requires_grad) return;
  grad_buffer(root.id)[0] = 1.0;
  for (std::uint32_t i = root.id + 1; i-- > 0;) {
    if (!nodes_[i].requires_grad || nodes_[i].grad.empty() || nodes_[i].op == Op::Leaf) continue;
    propagate(i);
  }
}

void Tape::propagate(std::uint32_t id) {
  // grad_buffer() never resizes nodes_, so references into it stay valid.
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  auto wants = [&](std::uint32_t in) { return nodes_[in].requires_grad; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatVec: {
      const std::uint32_t wi = n.inputs[0], xi = n.inputs[1];
      const Tensor& W = val(wi);
      const Tensor& x = val(xi);
      const std::size_t m = W.rows(), k = W.cols();
      if (wants(wi)) {
        double* dw = grad_buffer(wi).data();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* row = dw + i * k;
          for (std::size_t j = 0; j < k; ++j) row[j] += gi * x[j];
        }
      }
      if (wants(xi)) {
        double* dx = grad_buffer(xi).data();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          const double* row = W.data() + i * k;
          for (std::size_t j = 0; j < k; ++j) dx[j] += row[j] * gi;
        }
      }
      break;
    }
    case Op::MatTVec: {
      const std::uint32_t wi = n.inputs[0], xi = n.inputs[1];
      const Tensor& W = val(wi);
      const Tensor& x = val(xi);
      const std::size_t m = W.rows(), k = W.cols();
      if (wants(wi)) {
        double* dw = grad_buffer(wi).data();
        for (std::size_t i = 0; i < m; ++i) {
          const double xi_v = x[i];
          if (xi_v == 0.0) continue;
          double* row = dw + i * k;
          for (std::size_t j = 0; j < k; ++j) row[j] += xi_v * g[j];
        }
      }
      if (wants(xi)) {
        Tensor& dx = grad_buffer(xi);
        for (std::size_t i = 0; i < m; ++i) {
          const double* row = W.data() + i * k;
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += row[j] * g[j];
          dx[i] += acc;
        }
      }
      break;
    }
    case Op::Add:
    case Op::Sub: {
      const double sign_b = n.op == Op::Add ? 1.0 : -1.0;
      if (wants(n.inputs[0])) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (wants(n.inputs[1])) {
        Tensor& db = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign_b * g[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor& a = val(n.inputs[0]);
      const Tensor& b = val(n.inputs[1]);
      if (wants(n.inputs[0])) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
      }
      if (wants(n.inputs[1])) {
        Tensor& db = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
      }
      break;
    }
    case Op::Scale: {
      if (wants(n.inputs[0])) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.scalar;
      }
      break;
    }
    case Op::Concat: {
      std::size_t offset = 0;
      for (auto in : n.inputs) {
        const std::size_t len = val(in).size();
        if (wants(in)) {
          Tensor& d = grad_buffer(in);
          for (std::size_t i = 0; i < len; ++i) d[i] += g[offset + i];
        }
        offset += len;
      }
      break;
    }
    case Op::Slice: {
      if (wants(n.inputs[0])) {
        Tensor& d = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) d[n.index + i] += g[i];
      }
      break;
    }
    case Op::Tanh:
    case Op::Sigmoid:
    case Op::Relu: {
      if (!wants(n.inputs[0])) break;
      Tensor& d = grad_buffer(n.inputs[0]);
      const Tensor& y = n.value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double local = n.op == Op::Tanh      ? 1.0 - y[i] * y[i]
                             : n.op == Op::Sigmoid ? y[i] * (1.0 - y[i])
                                                   : (y[i] > 0.0 ? 1.0 : 0.0);
        d[i] += g[i] * local;
      }
      break;
    }
    case Op::Gather: {
      if (!wants(n.inputs[0])) break;
      auto row = grad_buffer(n.inputs[0]).row(n.index);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += g[j];
      break;
    }
    case Op::Softmax: {
      if (!wants(n.inputs[0])) break;
      Tensor& d = grad_buffer(n.inputs[0]);
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.aux[i];
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += n.aux[i] * (g[i] - dot);
      break;
    }
    case Op::SoftmaxCE: {
      if (!wants(n.inputs[0])) break;
      Tensor& d = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < n.aux.size(); ++i) {
        d[i] += g[0] * (n.aux[i] - (i == n.index ? 1.0 : 0.0));
      }
      break;
    }
    case Op::SigmoidBCE: {
      if (!wants(n.inputs[0])) break;
      const double z = val(n.inputs[0])[0];
      grad_buffer(n.inputs[0])[0] += g[0] * (sigmoid_scalar(z) - n.scalar);
      break;
    }
    case Op::MaxOver: {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto in = n.inputs[n.argmax[i]];
        if (wants(in)) grad_buffer(in)[i] += g[i];
      }
      break;
    }
    case Op::Dropout: {
      if (!wants(n.inputs[0])) break;
      Tensor& d = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.aux[i];
      break;
    }
    case Op::Sum: {
      if (!wants(n.inputs[0])) break;
      Tensor& d = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
      break;
    }
    case Op::WeightedSum: {
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (wants(n.inputs[k])) grad_buffer(n.inputs[k])[0] += g[0] * n.aux[k];
      }
      break;
    }
  }
}

}  // namespace pstory
