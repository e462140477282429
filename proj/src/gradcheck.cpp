#include <algorithm>
#include <cmath>

#include "dietgraph/gradcheck.hpp"

namespace dietgraph {

namespace {

template <typename T>
double eval_loss(
    const std::function<Var(Tape<T>&, const std::vector<Var>&)>& build,
    const std::vector<Tensor<T>>& inputs) {
  Tape<T> tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
  const Var loss = build(tape, leaves);
  return static_cast<double>(tape.val(loss).at(0, 0));
}

}  // namespace

template <typename T>
GradCheckReport grad_check(
    const std::function<Var(Tape<T>&, const std::vector<Var>&)>& build,
    std::vector<Tensor<T>> inputs, double h,
    std::size_t max_entries_per_input, RngStream& rng) {
  // Analytic pass.
  std::vector<Tensor<T>> grads;
  {
    Tape<T> tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
    const Var loss = build(tape, leaves);
    tape.backward(loss);
    for (Var v : leaves) grads.push_back(tape.grad(v));
  }

  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<T>& t = inputs[ti];
    std::vector<std::size_t> entries(t.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (entries.size() > max_entries_per_input) {
      // Partial Fisher-Yates: the first max_entries_per_input slots end up
      // as a uniform sample without replacement.
      for (std::size_t i = 0; i < max_entries_per_input; ++i) {
        const std::size_t j =
            i + rng.uniform_index(entries.size() - i);
        std::swap(entries[i], entries[j]);
      }
      entries.resize(max_entries_per_input);
    }
    for (std::size_t e : entries) {
      const T saved = t.data()[e];
      const double step = h * std::max(1.0, std::abs(static_cast<double>(saved)));
      t.data()[e] = static_cast<T>(static_cast<double>(saved) + step);
      const double up = eval_loss(build, inputs);
      t.data()[e] = static_cast<T>(static_cast<double>(saved) - step);
      const double down = eval_loss(build, inputs);
      t.data()[e] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = static_cast<double>(grads[ti].data()[e]);
      const double rel =
          std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = ti;
        report.worst_row = static_cast<int>(e / t.cols());
        report.worst_col = static_cast<int>(e % t.cols());
        report.analytic = an;
        report.numeric = fd;
      }
    }
  }
  return report;
}

template GradCheckReport grad_check<float>(
    const std::function<Var(Tape<float>&, const std::vector<Var>&)>&,
    std::vector<Tensor<float>>, double, std::size_t, RngStream&);
template GradCheckReport grad_check<double>(
    const std::function<Var(Tape<double>&, const std::vector<Var>&)>&,
    std::vector<Tensor<double>>, double, std::size_t, RngStream&);

}  // namespace dietgraph
