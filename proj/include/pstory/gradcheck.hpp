#pragma once

#include <functional>
#include <string>

#include "pstory/params.hpp"
#include "pstory/tape.hpp"

namespace pstory {

// Builds a scalar loss on a fresh tape from the bound parameters.
using LossBuilder = std::function<Var(Tape&, Binding&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Central differences on every coordinate of every parameter, compared with
// the tape's analytic gradient. The relative error of one coordinate is
// |a - n| / max(|a|, |n|, floor). Parameters are restored on return.
GradCheckResult finite_difference_check(const LossBuilder& loss_fn, ParamStore& params,
                                        double eps = 1e-6, double floor = 1e-6);

}  // namespace pstory
