#include "dietgraph/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "dietgraph/error.hpp"

namespace dietgraph {
namespace {

constexpr int kMaxIter = 500;
constexpr double kConvEps = 1e-15;
constexpr double kTiny = 1e-300;

// Lower regularized incomplete gamma by power series; valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kConvEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma by modified Lentz continued fraction;
// valid for x >= a + 1.
double gamma_q_lentz(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kConvEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Continued fraction for the incomplete beta; caller applies the prefactor
// and decides the symmetry flip.
double beta_lentz(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kConvEps) break;
  }
  return h;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void check_gamma_args(double a, double x, const char* who) {
  if (!(a > 0.0)) throw Error(std::string(who) + ": shape must be positive");
  if (!(x >= 0.0))
    throw Error(std::string(who) + ": argument must be non-negative");
}

struct SampleStats {
  long n = 0;
  double mean = 0.0;
  double var = 0.0;  // n-1 denominator
};

SampleStats describe(const std::vector<double>& v, const char* side) {
  if (v.size() < 2)
    throw Error(std::string("welch_t: sample ") + side +
                " needs at least 2 values");
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x))
      throw Error(std::string("welch_t: sample ") + side +
                  " has a non-finite value");
    sum += x;
  }
  SampleStats s;
  s.n = static_cast<long>(v.size());
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.var = ss / static_cast<double>(s.n - 1);
  return s;
}

}  // namespace

double reg_gamma_p(double a, double x) {
  check_gamma_args(a, x, "reg_gamma_p");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return clamp01(gamma_p_series(a, x));
  return clamp01(1.0 - gamma_q_lentz(a, x));
}

double reg_gamma_q(double a, double x) {
  check_gamma_args(a, x, "reg_gamma_q");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return clamp01(1.0 - gamma_p_series(a, x));
  return clamp01(gamma_q_lentz(a, x));
}

double reg_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw Error("reg_beta: both shapes must be positive");
  if (!(x >= 0.0) || x > 1.0)
    throw Error("reg_beta: argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  // Same prefactor on both sides of the flip: x^a (1-x)^b / B(a,b).
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
               a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0))
    return clamp01(front * beta_lentz(a, b, x) / a);
  return clamp01(1.0 - front * beta_lentz(b, a, 1.0 - x) / b);
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0))
    throw Error("student_t_two_sided: df must be positive");
  if (!std::isfinite(t))
    throw Error("student_t_two_sided: non-finite statistic");
  return reg_beta(0.5 * df, 0.5, df / (df + t * t));
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0)) throw Error("chi_square_sf: df must be positive");
  if (!(x >= 0.0))
    throw Error("chi_square_sf: statistic must be non-negative");
  return reg_gamma_q(0.5 * df, 0.5 * x);
}

TestResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  const SampleStats sa = describe(a, "a");
  const SampleStats sb = describe(b, "b");
  TestResult r;
  r.groups = {{sa.n, sa.mean, std::sqrt(sa.var)},
              {sb.n, sb.mean, std::sqrt(sb.var)}};
  if (sa.var == 0.0 && sb.var == 0.0) {
    if (sa.mean != sb.mean)
      throw Error("welch_t: both samples constant with differing means");
    r.statistic = 0.0;
    r.df = static_cast<double>(sa.n + sb.n - 2);
    r.p = 1.0;
    return r;
  }
  const double ea = sa.var / static_cast<double>(sa.n);
  const double eb = sb.var / static_cast<double>(sb.n);
  const double se2 = ea + eb;
  r.statistic = (sa.mean - sb.mean) / std::sqrt(se2);
  r.df = se2 * se2 /
         (ea * ea / static_cast<double>(sa.n - 1) +
          eb * eb / static_cast<double>(sb.n - 1));
  r.p = student_t_two_sided(r.statistic, r.df);
  return r;
}

TestResult chi_square(const ContingencyTable2x2& t,
                      bool continuity_correction) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0)
    throw Error("chi_square: negative count");
  const double n = static_cast<double>(t.total());
  if (n <= 0.0) throw Error("chi_square: empty table");
  const double row[2] = {static_cast<double>(t.a + t.b),
                         static_cast<double>(t.c + t.d)};
  const double col[2] = {static_cast<double>(t.a + t.c),
                         static_cast<double>(t.b + t.d)};
  if (row[0] == 0.0 || row[1] == 0.0 || col[0] == 0.0 || col[1] == 0.0)
    throw Error("chi_square: zero expected count (empty row or column)");
  const double obs[2][2] = {{static_cast<double>(t.a),
                             static_cast<double>(t.b)},
                            {static_cast<double>(t.c),
                             static_cast<double>(t.d)}};
  double stat = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / n;
      double diff = std::fabs(obs[i][j] - e);
      if (continuity_correction) diff = std::max(0.0, diff - 0.5);
      stat += diff * diff / e;
    }
  TestResult r;
  r.statistic = stat;
  r.df = 1.0;
  r.p = chi_square_sf(stat, 1.0);
  r.groups = {{t.a + t.b, obs[0][0] / row[0], 0.0},
              {t.c + t.d, obs[1][0] / row[1], 0.0}};
  return r;
}

std::vector<KeywordRow> keyword_freq(const std::vector<std::string>& texts,
                                     const std::vector<std::string>& stopwords,
                                     long group_size) {
  const std::set<std::string> stop(stopwords.begin(), stopwords.end());
  std::map<std::string, long> counts;
  std::string tok;
  auto flush = [&] {
    if (!tok.empty() && stop.count(tok) == 0) ++counts[tok];
    tok.clear();
  };
  for (const std::string& text : texts) {
    for (unsigned char ch : text) {
      if (std::isalnum(ch))
        tok.push_back(static_cast<char>(std::tolower(ch)));
      else if (ch >= 0x80)
        tok.push_back(static_cast<char>(ch));
      else
        flush();
    }
    flush();
  }
  std::vector<KeywordRow> rows;
  rows.reserve(counts.size());
  for (const auto& [term, count] : counts) {
    const double pc = group_size > 0
                          ? static_cast<double>(count) /
                                static_cast<double>(group_size)
                          : static_cast<double>(count);
    rows.push_back({term, count, pc});
  }
  std::sort(rows.begin(), rows.end(), [](const KeywordRow& x,
                                         const KeywordRow& y) {
    if (x.count != y.count) return x.count > y.count;
    return x.term < y.term;
  });
  return rows;
}

HabitReport habit_contingency_report(const HeteroGraph& g,
                                     const StatsConfig& cfg) {
  const int ht = g.type_index("habit");
  const int n_users = g.node_counts[g.user_type()];
  if (static_cast<int>(g.labels.size()) != n_users)
    throw Error("habit_contingency_report: graph has no user labels");
  long total_pos = 0;
  for (int u = 0; u < n_users; ++u)
    if (g.labels[u] == 1) ++total_pos;
  const long total_neg = n_users - total_pos;

  const Relation& have = g.relation("have");
  HabitReport report;
  for (int h = 0; h < g.node_counts[ht]; ++h) {
    const std::string& name = g.id_names[ht][h];
    const std::size_t lo = have.rev_offsets[h];
    const std::size_t hi = have.rev_offsets[h + 1];
    if (lo == hi) {
      report.notes.push_back("habit " + name + ": no holders, skipped");
      continue;
    }
    ContingencyTable2x2 tbl;
    for (std::size_t e = lo; e < hi; ++e) {
      if (g.labels[have.rev_nbrs[e]] == 1)
        ++tbl.a;
      else
        ++tbl.b;
    }
    tbl.c = total_pos - tbl.a;
    tbl.d = total_neg - tbl.b;
    HabitAssociation row;
    row.habit = h;
    row.name = name;
    row.holders = static_cast<long>(hi - lo);
    row.table = tbl;
    try {
      row.test = chi_square(tbl, cfg.continuity_correction);
    } catch (const Error& e) {
      report.notes.push_back("habit " + name + ": " + e.what() + ", skipped");
      continue;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace dietgraph
