#include "dietgraph/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dietgraph/error.hpp"

namespace dietgraph {

Metrics evaluate(const std::vector<double>& scores,
                 const std::vector<int>& hard_labels,
                 const std::vector<int>& true_labels) {
  const std::size_t n = true_labels.size();
  if (scores.size() != n || hard_labels.size() != n)
    throw Error("evaluate: input lengths differ");
  if (n == 0) throw Error("evaluate: empty input");
  for (int l : true_labels)
    if (l != 0 && l != 1) throw Error("evaluate: labels must be 0 or 1");

  Metrics m;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pred = hard_labels[i] == 1;
    const bool truth = true_labels[i] == 1;
    if (pred && truth) ++m.confusion.tp;
    else if (pred && !truth) ++m.confusion.fp;
    else if (!pred && truth) ++m.confusion.fn;
    else ++m.confusion.tn;
  }
  const Confusion& c = m.confusion;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  m.precision = c.tp + c.fp == 0
                    ? 0.0
                    : static_cast<double>(c.tp) / (c.tp + c.fp);
  m.recall =
      c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);

  // Pairwise rank AUC: sort once, walk groups of tied scores. Within a
  // group every (pos, neg) pair is a tie; positives beat exactly the
  // negatives seen in strictly earlier (smaller score) groups.
  const long pos = c.tp + c.fn;
  const long neg = c.fp + c.tn;
  if (pos > 0 && neg > 0) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] < scores[b];
    });
    long wins2 = 0;  // 2 * wins + ties, accumulated directly
    long neg_below = 0;
    std::size_t g = 0;
    while (g < n) {
      std::size_t end = g;
      long gp = 0, gn = 0;
      while (end < n && scores[order[end]] == scores[order[g]]) {
        if (true_labels[order[end]] == 1) ++gp;
        else ++gn;
        ++end;
      }
      wins2 += 2 * gp * neg_below + gp * gn;
      neg_below += gn;
      g = end;
    }
    m.auc = static_cast<double>(wins2) / (2.0 * pos * neg);
    m.auc_defined = true;
  }
  return m;
}

Aggregate aggregate(const std::vector<double>& values) {
  if (values.empty()) throw Error("aggregate: empty input");
  Aggregate a;
  a.values = values;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return a;
}

}  // namespace dietgraph
