#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pstory/params.hpp"
#include "pstory/rng.hpp"
#include "pstory/tape.hpp"

namespace pstory {

struct LinearParams {
  ParamId weight;  // [out x in]
  ParamId bias;    // [out]
  std::size_t in = 0;
  std::size_t out = 0;

  static LinearParams create(ParamStore& store, const std::string& prefix, std::size_t in,
                             std::size_t out, std::uint64_t seed);
};

// y = W x + b
Var linear_forward(Tape& tape, Var x, Var weight, Var bias);
Var linear_forward(Binding& bind, const LinearParams& p, Var x);

Var embedding_lookup(Tape& tape, Var table, std::size_t id);

// Gates are packed as [input, forget, candidate, output] in one
// [4H x (in + H)] matrix applied to concat(x, h).
struct LstmParams {
  ParamId weight;
  ParamId bias;
  std::size_t input = 0;
  std::size_t hidden = 0;

  static LstmParams create(ParamStore& store, const std::string& prefix, std::size_t input,
                           std::size_t hidden, std::uint64_t seed);
};

struct LstmState {
  Var h;
  Var c;
};

LstmState lstm_zero_state(Tape& tape, std::size_t hidden);
LstmState lstm_cell_step(Binding& bind, const LstmParams& p, Var x, LstmState prev);

struct BiLstmParams {
  LstmParams forward;
  LstmParams backward;

  static BiLstmParams create(ParamStore& store, const std::string& prefix, std::size_t input,
                             std::size_t hidden, std::uint64_t seed);
};

// output[t] = concat(forward state after t, backward state after t).
std::vector<Var> bilstm_encode(Binding& bind, const BiLstmParams& p, std::span<const Var> seq);

struct ConvFilter {
  ParamId weight;  // [channels x (width * dim)]
  ParamId bias;    // [channels]
  std::size_t width = 0;
  std::size_t channels = 0;
};

// For each filter, the max over time of its linear response on every window;
// results concatenated in filter order. Sequences shorter than a filter are
// right-padded with zero vectors of dimension `dim`.
Var conv1d_maxpool(Binding& bind, std::span<const ConvFilter> filters, std::span<const Var> seq,
                   std::size_t dim);

// Inverted dropout mask: Bernoulli(1 - p) scaled by 1 / (1 - p). In
// evaluation mode (training == false) the mask is all ones.
Tensor dropout_mask(const Shape& shape, double p, Rng& rng, bool training = true);

Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t target);
Var sigmoid_bce(Tape& tape, Var logit, int label);

}  // namespace pstory
