#include "pstory/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pstory/error.hpp"

namespace pstory {

namespace {

double evaluate(const LossBuilder& loss_fn, const ParamStore& params) {
  Tape tape;
  Binding bind(tape, params, false);
  return tape.value(loss_fn(tape, bind)).item();
}

}  // namespace

GradCheckResult finite_difference_check(const LossBuilder& loss_fn, ParamStore& params,
                                        double eps, double floor) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_check: eps must be positive");

  Tape tape;
  Binding bind(tape, params, true);
  const Var root = loss_fn(tape, bind);
  const double base = tape.value(root).item();
  const Gradients analytic = backward(tape, root, bind);

  const double again = evaluate(loss_fn, params);
  if (std::memcmp(&base, &again, sizeof(double)) != 0) {
    throw DeterminismError("finite_difference_check: loss differs between evaluations (" +
                           std::to_string(base) + " vs " + std::to_string(again) + ")");
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.at(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double saved = p[j];
      p[j] = saved + eps;
      const double plus = evaluate(loss_fn, params);
      p[j] = saved - eps;
      const double minus = evaluate(loss_fn, params);
      p[j] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.at(i)[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = params.name(i);
        result.worst_index = j;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace pstory
