#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/rng.hpp"
#include "dietgraph/tensor.hpp"

namespace dietgraph {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  // Worst offender, for debugging.
  std::size_t worst_input = 0;
  int worst_row = 0;
  int worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of reverse-mode gradients. build must construct
// the same graph every call from the leaves it is given (one per input, same
// order) and return a 1 x 1 loss; any randomness inside must be re-seeded
// per call so repeated builds agree. Inputs larger than
// max_entries_per_input are subsampled without replacement.
// Relative error is |fd - grad| / max(1, |fd|, |grad|).
template <typename T>
GradCheckReport grad_check(
    const std::function<Var(Tape<T>&, const std::vector<Var>&)>& build,
    std::vector<Tensor<T>> inputs, double h,
    std::size_t max_entries_per_input, RngStream& rng);

extern template GradCheckReport grad_check<float>(
    const std::function<Var(Tape<float>&, const std::vector<Var>&)>&,
    std::vector<Tensor<float>>, double, std::size_t, RngStream&);
extern template GradCheckReport grad_check<double>(
    const std::function<Var(Tape<double>&, const std::vector<Var>&)>&,
    std::vector<Tensor<double>>, double, std::size_t, RngStream&);

}  // namespace dietgraph
