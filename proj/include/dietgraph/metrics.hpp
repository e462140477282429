#pragma once

#include <vector>

namespace dietgraph {

struct Confusion {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  bool auc_defined = false;  // false when truth is single-class
  Confusion confusion;
};

// Standard binary metrics with positive class 1. AUC is the exact pairwise
// rank statistic: correctly ordered (positive, negative) score pairs count
// 1, ties count 1/2, computed in integer arithmetic so it is exact.
// Precision (recall, F1) fall back to 0 when their denominator is empty.
Metrics evaluate(const std::vector<double>& scores,
                 const std::vector<int>& hard_labels,
                 const std::vector<int>& true_labels);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population form: exactly 0 for a single value
  std::vector<double> values;
};

Aggregate aggregate(const std::vector<double>& values);

}  // namespace dietgraph
