#include <algorithm>
#include <cmath>
#include <vector>

#include "dietgraph/error.hpp"
#include "dietgraph/metrics.hpp"
#include "dietgraph/rng.hpp"
#include "doctest.h"

using dietgraph::aggregate;
using dietgraph::evaluate;
using dietgraph::Metrics;

namespace {

// Naive reference: every quantity recomputed from first principles, no
// shared code with the library implementation.
struct NaiveMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  double auc = 0.0;
  bool auc_defined = false;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

NaiveMetrics naive_eval(const std::vector<double>& scores,
                        const std::vector<int>& hard,
                        const std::vector<int>& truth) {
  NaiveMetrics m;
  const std::size_t n = truth.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (hard[i] == 1 && truth[i] == 1) ++m.tp;
    if (hard[i] == 1 && truth[i] == 0) ++m.fp;
    if (hard[i] == 0 && truth[i] == 1) ++m.fn;
    if (hard[i] == 0 && truth[i] == 0) ++m.tn;
  }
  m.accuracy = double(m.tp + m.tn) / double(n);
  if (m.tp + m.fp > 0) m.precision = double(m.tp) / double(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = double(m.tp) / double(m.tp + m.fn);
  if (m.precision + m.recall > 0.0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  // AUC by brute-force enumeration of all positive/negative pairs.
  double credit = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (truth[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  if (pairs > 0) {
    m.auc = credit / double(pairs);
    m.auc_defined = true;
  }
  return m;
}

}  // namespace

TEST_CASE("worked confusion example") {
  // 10 samples, TP=3 FP=1 FN=2 TN=4.
  std::vector<int> truth = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  std::vector<int> hard = {1, 1, 1, 0, 0, 1, 0, 0, 0, 0};
  std::vector<double> scores = {0.9, 0.8, 0.7, 0.4, 0.3,
                                0.6, 0.2, 0.1, 0.05, 0.01};
  const Metrics m = evaluate(scores, hard, truth);
  CHECK(m.confusion.tp == 3);
  CHECK(m.confusion.fp == 1);
  CHECK(m.confusion.fn == 2);
  CHECK(m.confusion.tn == 4);
  CHECK(m.accuracy == 0.7);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.6);
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("perfect classifier") {
  std::vector<int> truth = {1, 0, 1, 0};
  std::vector<int> hard = truth;
  std::vector<double> scores = {0.9, 0.1, 0.8, 0.2};
  const Metrics m = evaluate(scores, hard, truth);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.auc_defined);
  CHECK(m.auc == 1.0);
}

TEST_CASE("all-wrong hard labels with reversed scores") {
  std::vector<int> truth = {1, 1, 0, 0};
  std::vector<int> hard = {0, 0, 1, 1};
  std::vector<double> scores = {0.1, 0.2, 0.8, 0.9};
  const Metrics m = evaluate(scores, hard, truth);
  CHECK(m.accuracy == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(m.auc == 0.0);
}

TEST_CASE("tied scores earn half credit") {
  // One positive and one negative share a score: AUC = 0.5 exactly.
  std::vector<int> truth = {1, 0};
  std::vector<int> hard = {1, 0};
  std::vector<double> scores = {0.5, 0.5};
  CHECK(evaluate(scores, hard, truth).auc == 0.5);

  // All four tied: still exactly 0.5 regardless of label layout.
  std::vector<int> t4 = {1, 0, 1, 0};
  std::vector<double> s4(4, 0.25);
  CHECK(evaluate(s4, t4, t4).auc == 0.5);
}

TEST_CASE("auc matches brute force on small random sets") {
  dietgraph::RngStream rng(77, "metrics-small");
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + int(rng.uniform_index(19));
    std::vector<double> scores(n);
    std::vector<int> truth(n), hard(n);
    for (int i = 0; i < n; ++i) {
      // Coarse grid of score values so ties actually happen.
      scores[i] = double(rng.uniform_index(5)) / 4.0;
      truth[i] = int(rng.uniform_index(2));
      hard[i] = int(rng.uniform_index(2));
    }
    const NaiveMetrics ref = naive_eval(scores, hard, truth);
    const Metrics m = evaluate(scores, hard, truth);
    CHECK(m.auc_defined == ref.auc_defined);
    if (ref.auc_defined) CHECK(m.auc == ref.auc);
  }
}

TEST_CASE("exact agreement with naive oracle on 1000 random sets") {
  dietgraph::RngStream rng(4242, "metrics-oracle");
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + int(rng.uniform_index(40));
    std::vector<double> scores(n);
    std::vector<int> truth(n), hard(n);
    for (int i = 0; i < n; ++i) {
      // Mix of continuous and heavily tied score distributions.
      if (trial % 3 == 0)
        scores[i] = double(rng.uniform_index(4)) / 3.0;
      else
        scores[i] = rng.uniform();
      truth[i] = int(rng.uniform_index(2));
      hard[i] = rng.uniform() < 0.5 ? truth[i] : int(rng.uniform_index(2));
    }
    const NaiveMetrics ref = naive_eval(scores, hard, truth);
    const Metrics m = evaluate(scores, hard, truth);
    REQUIRE(m.confusion.tp == ref.tp);
    REQUIRE(m.confusion.fp == ref.fp);
    REQUIRE(m.confusion.fn == ref.fn);
    REQUIRE(m.confusion.tn == ref.tn);
    REQUIRE(m.accuracy == ref.accuracy);
    REQUIRE(m.precision == ref.precision);
    REQUIRE(m.recall == ref.recall);
    REQUIRE(m.f1 == ref.f1);
    REQUIRE(m.auc_defined == ref.auc_defined);
    if (ref.auc_defined) REQUIRE(m.auc == ref.auc);
  }
}

TEST_CASE("single-class input leaves auc undefined") {
  std::vector<int> pos = {1, 1, 1};
  std::vector<double> s = {0.1, 0.5, 0.9};
  CHECK_FALSE(evaluate(s, pos, pos).auc_defined);

  std::vector<int> neg = {0, 0, 0};
  CHECK_FALSE(evaluate(s, neg, neg).auc_defined);
}

TEST_CASE("input validation") {
  std::vector<double> s = {0.5, 0.5};
  std::vector<int> l = {0, 1};
  std::vector<int> shorter = {0};
  CHECK_THROWS_AS(evaluate(s, shorter, l), dietgraph::Error);
  CHECK_THROWS_AS(evaluate({}, {}, {}), dietgraph::Error);
  std::vector<int> bad = {0, 7};
  CHECK_THROWS_AS(evaluate(s, l, bad), dietgraph::Error);
}

TEST_CASE("aggregate mean and population stddev") {
  const auto a = aggregate({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  CHECK(a.mean == 5.0);
  CHECK(a.stddev == 2.0);

  // Single value: spread is zero by the population convention.
  const auto single = aggregate({3.25});
  CHECK(single.mean == 3.25);
  CHECK(single.stddev == 0.0);

  CHECK_THROWS_AS(aggregate({}), dietgraph::Error);
}
