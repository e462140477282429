#pragma once

#include <string>
#include <vector>

#include "dietgraph/config.hpp"
#include "dietgraph/hetgraph.hpp"

namespace dietgraph {

// Regularized incomplete gamma functions P(a,x) (lower) and Q(a,x) = 1 - P.
// Series expansion below x = a + 1, Lentz continued fraction above. Both
// require a > 0, x >= 0.
double reg_gamma_p(double a, double x);
double reg_gamma_q(double a, double x);

// Regularized incomplete beta I_x(a, b); Lentz continued fraction with the
// symmetry flip at the usual convergence boundary. Requires a, b > 0 and
// x in [0, 1].
double reg_beta(double a, double b, double x);

// Two-sided p-value of a t statistic: I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided(double t, double df);

// Survival function of the chi-square distribution: Q(df/2, x/2).
double chi_square_sf(double x, double df);

struct GroupSummary {
  long n = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p = 1.0;
  std::vector<GroupSummary> groups;
};

// Welch unequal-variance t-test, two-sided, with Welch-Satterthwaite
// degrees of freedom. Each sample needs >= 2 finite values. Both samples
// constant with equal means degenerates to t = 0, p = 1 (df falls back to
// the pooled n_a + n_b - 2); both constant with differing means is an
// error. groups[0]/groups[1] carry n, mean, and sample (n-1) stddev.
TestResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

// Rows are the two groups, columns the two outcomes.
struct ContingencyTable2x2 {
  long a = 0;  // group 0, outcome 0
  long b = 0;  // group 0, outcome 1
  long c = 0;  // group 1, outcome 0
  long d = 0;  // group 1, outcome 1
  long total() const { return a + b + c + d; }
};

// Pearson chi-square with df = 1; p via the chi-square survival function.
// The optional continuity correction shrinks every |O - E| by 0.5 (floored
// at 0). Any empty row or column makes an expected cell zero and is an
// error, as are negative counts. groups carry per-row n and the row's
// outcome-0 share as mean (stddev left 0: a share has no sample spread).
TestResult chi_square(const ContingencyTable2x2& t,
                      bool continuity_correction = false);

struct KeywordRow {
  std::string term;
  long count = 0;
  double per_capita = 0.0;
};

// Lowercases, tokenizes on ASCII non-alphanumerics (bytes >= 0x80 stay part
// of a token so multibyte UTF-8 words survive intact), drops stopwords, and
// counts. Sorted by count descending, term ascending. per_capita divides by
// group_size when positive, otherwise repeats the raw count.
std::vector<KeywordRow> keyword_freq(const std::vector<std::string>& texts,
                                     const std::vector<std::string>& stopwords,
                                     long group_size = 0);

struct HabitAssociation {
  int habit = 0;
  std::string name;
  long holders = 0;
  ContingencyTable2x2 table;  // rows: holders / non-holders; cols: label 1 / 0
  TestResult test;
};

struct HabitReport {
  std::vector<HabitAssociation> rows;  // habit id ascending
  std::vector<std::string> notes;      // skipped habits with the reason
};

// One chi-square row per habit that has at least one holder and a
// non-degenerate table; everything else lands in notes. Uses every labeled
// user (this is descriptive reporting, not training).
HabitReport habit_contingency_report(const HeteroGraph& g,
                                     const StatsConfig& cfg);

}  // namespace dietgraph
