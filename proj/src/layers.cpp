#include "pstory/layers.hpp"

#include "pstory/error.hpp"

namespace pstory {

LinearParams LinearParams::create(ParamStore& store, const std::string& prefix, std::size_t in,
                                  std::size_t out, std::uint64_t seed) {
  LinearParams p;
  p.in = in;
  p.out = out;
  p.weight = store.add_uniform(prefix + "/weight", {out, in}, in, seed);
  p.bias = store.add_uniform(prefix + "/bias", {out}, in, seed);
  return p;
}

Var linear_forward(Tape& tape, Var x, Var weight, Var bias) {
  const Tensor& W = tape.value(weight);
  const Tensor& X = tape.value(x);
  const Tensor& B = tape.value(bias);
  if (W.rank() != 2 || X.rank() != 1 || W.cols() != X.size() || B.size() != W.rows()) {
    throw DimensionError("linear: weight " + shape_str(W.shape()) + " incompatible with input " +
                         shape_str(X.shape()) + " and bias " + shape_str(B.shape()));
  }
  return tape.add(tape.matvec(weight, x), bias);
}

Var linear_forward(Binding& bind, const LinearParams& p, Var x) {
  return linear_forward(bind.tape(), x, bind(p.weight), bind(p.bias));
}

Var embedding_lookup(Tape& tape, Var table, std::size_t id) { return tape.gather(table, id); }

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix, std::size_t input,
                              std::size_t hidden, std::uint64_t seed) {
  LstmParams p;
  p.input = input;
  p.hidden = hidden;
  p.weight = store.add_uniform(prefix + "/weight", {4 * hidden, input + hidden}, input + hidden, seed);
  p.bias = store.add_uniform(prefix + "/bias", {4 * hidden}, input + hidden, seed);
  return p;
}

LstmState lstm_zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor({hidden})), tape.constant(Tensor({hidden}))};
}

LstmState lstm_cell_step(Binding& bind, const LstmParams& p, Var x, LstmState prev) {
  Tape& t = bind.tape();
  const std::size_t H = p.hidden;
  if (t.value(prev.h).size() != H || t.value(prev.c).size() != H) {
    throw DimensionError("lstm: state dims " + shape_str(t.value(prev.h).shape()) + "/" +
                         shape_str(t.value(prev.c).shape()) + " differ from hidden size " +
                         std::to_string(H));
  }
  if (t.value(x).size() != p.input) {
    throw DimensionError("lstm: input " + shape_str(t.value(x).shape()) + " but cell expects " +
                         std::to_string(p.input));
  }
  const Var gates = t.add(t.matvec(bind(p.weight), t.concat({x, prev.h})), bind(p.bias));
  const Var in_gate = t.sigmoid(t.slice(gates, 0, H));
  const Var forget_gate = t.sigmoid(t.slice(gates, H, H));
  const Var candidate = t.tanh(t.slice(gates, 2 * H, H));
  const Var out_gate = t.sigmoid(t.slice(gates, 3 * H, H));
  const Var c = t.add(t.mul(forget_gate, prev.c), t.mul(in_gate, candidate));
  const Var h = t.mul(out_gate, t.tanh(c));
  return {h, c};
}

BiLstmParams BiLstmParams::create(ParamStore& store, const std::string& prefix, std::size_t input,
                                  std::size_t hidden, std::uint64_t seed) {
  return {LstmParams::create(store, prefix + "/fwd", input, hidden, seed),
          LstmParams::create(store, prefix + "/bwd", input, hidden, seed)};
}

std::vector<Var> bilstm_encode(Binding& bind, const BiLstmParams& p, std::span<const Var> seq) {
  if (seq.empty()) throw EmptyInputError("bilstm_encode: empty sequence");
  Tape& t = bind.tape();
  const std::size_t n = seq.size();
  std::vector<Var> fwd(n), bwd(n);
  LstmState s = lstm_zero_state(t, p.forward.hidden);
  for (std::size_t i = 0; i < n; ++i) {
    s = lstm_cell_step(bind, p.forward, seq[i], s);
    fwd[i] = s.h;
  }
  s = lstm_zero_state(t, p.backward.hidden);
  for (std::size_t i = n; i-- > 0;) {
    s = lstm_cell_step(bind, p.backward, seq[i], s);
    bwd[i] = s.h;
  }
  std::vector<Var> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t.concat({fwd[i], bwd[i]});
  return out;
}

Var conv1d_maxpool(Binding& bind, std::span<const ConvFilter> filters, std::span<const Var> seq,
                   std::size_t dim) {
  if (filters.empty()) throw ConfigError("conv1d_maxpool: no filters");
  Tape& t = bind.tape();
  std::size_t max_width = 0;
  for (const auto& f : filters) max_width = std::max(max_width, f.width);

  std::vector<Var> padded(seq.begin(), seq.end());
  for (auto v : padded) {
    if (t.value(v).size() != dim) {
      throw DimensionError("conv1d_maxpool: position of shape " + shape_str(t.value(v).shape()) +
                           " but dim is " + std::to_string(dim));
    }
  }
  if (padded.size() < max_width) {
    const Var zero = t.constant(Tensor({dim}));
    padded.resize(max_width, zero);
  }

  std::vector<Var> pooled;
  pooled.reserve(filters.size());
  for (const auto& f : filters) {
    const Var w = bind(f.weight);
    const Var b = bind(f.bias);
    std::vector<Var> responses;
    for (std::size_t start = 0; start + f.width <= padded.size(); ++start) {
      const Var window = t.concat(std::span<const Var>(padded).subspan(start, f.width));
      responses.push_back(linear_forward(t, window, w, b));
    }
    pooled.push_back(t.max_over(responses));
  }
  return pooled.size() == 1 ? pooled[0] : t.concat(pooled);
}

Tensor dropout_mask(const Shape& shape, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  Tensor mask(shape, 1.0);
  if (!training || p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask.span()) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t target) {
  return tape.softmax_ce(logits, target);
}

Var sigmoid_bce(Tape& tape, Var logit, int label) { return tape.sigmoid_bce(logit, label); }

}  // namespace pstory
