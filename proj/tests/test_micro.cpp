#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "dietgraph/error.hpp"
#include "dietgraph/micro.hpp"
#include "dietgraph/rng.hpp"
#include "doctest.h"

using namespace dietgraph;

namespace {

double elu_ref(double x) { return x > 0 ? x : std::expm1(x); }

// Two-type fixture: 3 users eating 3 foods. User 0 eats foods 0 and 1,
// user 1 eats food 1, user 2 eats food 2.
HeteroGraph two_type_graph() {
  HeteroGraph g;
  g.node_types = {"user", "food"};
  g.node_counts = {3, 3};
  g.features.push_back(Tensor<double>::from_rows(
      3, 2, {0.5, -1.0, 1.5, 0.3, -0.7, 0.9}));
  g.features.push_back(Tensor<double>::from_rows(
      3, 3, {1.0, -0.4, 0.2, -1.2, 0.8, 0.5, 0.3, 0.6, -0.9}));
  g.id_names = {{"u0", "u1", "u2"}, {"f0", "f1", "f2"}};
  g.labels = {0, 1, 0};
  g.relations.push_back(build_relation("user", "eat", "food", 3, 3,
                                       {{0, 0}, {0, 1}, {1, 1}, {2, 2}}));
  return g;
}

// Directed attention edge in global node ids.
struct Arc {
  int att;
  int nbr;
};

// Dense recomputation over the stacked node space. stored is the relation
// transform exactly as held in the parameter store; the score contracts
// z_att against stored-block-transposed times z_nbr, mirroring the
// implementation's transpose-free layout.
std::vector<std::vector<double>> dense_micro(
    const std::vector<std::vector<double>>& z_all,
    const std::vector<std::vector<Arc>>& arcs, const Tensor<double>& stored,
    int dim, int heads, bool mean_norm) {
  const int n = static_cast<int>(z_all.size());
  const int dh = dim / heads;
  std::vector<std::vector<double>> out(n, std::vector<double>(dim, 0.0));
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < n; ++i) {
      // A node with no arcs scores itself; alpha is then 1 either way.
      std::vector<Arc> local = arcs[i];
      const bool self_only = local.empty();
      if (self_only) local.push_back({i, i});
      std::vector<double> logits;
      for (const Arc& a : local) {
        double s = 0.0;
        if (self_only) {
          // Self scoring is a plain dot product, no relation transform.
          for (int c = 0; c < dh; ++c)
            s += z_all[a.att][h * dh + c] * z_all[a.nbr][h * dh + c];
        } else {
          for (int c = 0; c < dh; ++c)
            for (int k = 0; k < dh; ++k)
              s += z_all[a.att][h * dh + c] *
                   stored.at(h * dh + k, h * dh + c) *
                   z_all[a.nbr][h * dh + k];
        }
        logits.push_back(s / std::sqrt(static_cast<double>(dim)));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        denom += l;
      }
      const double scale =
          mean_norm ? 1.0 / static_cast<double>(local.size()) : 1.0;
      for (int c = 0; c < dh; ++c) {
        double agg = 0.0;
        for (std::size_t p = 0; p < local.size(); ++p)
          agg += logits[p] / denom * z_all[local[p].nbr][h * dh + c];
        out[i][h * dh + c] = elu_ref(agg * scale);
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> project_all(const HeteroGraph& g,
                                             ParamStore<double>& store,
                                             int dim) {
  std::vector<std::vector<double>> z;
  for (std::size_t t = 0; t < g.node_types.size(); ++t) {
    const auto& w = store.get("micro.wt." + g.node_types[t]).value;
    const auto& x = g.features[t];
    for (int i = 0; i < g.node_counts[t]; ++i) {
      std::vector<double> row(dim, 0.0);
      for (int c = 0; c < dim; ++c)
        for (int k = 0; k < x.cols(); ++k)
          row[c] += x.at(i, k) * w.at(k, c);
      z.push_back(std::move(row));
    }
  }
  return z;
}

MicroConfig small_cfg() {
  MicroConfig cfg;
  cfg.dim = 4;
  cfg.heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("two-type fixture matches a dense evaluation") {
  const HeteroGraph g = two_type_graph();
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(11, "micro");
  add_micro_params(store, g, cfg, rng);
  store.get("micro.wr.eat").value = Tensor<double>::from_rows(
      4, 4, {0.3, -0.5, 0.2, 0.7, 0.9, 0.1, -0.4, 0.6, -0.2, 0.8, 0.5, -0.3,
             0.4, -0.7, 0.1, 0.2});

  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  // Global ids: users 0..2, foods 3..5. Arcs follow the eat relation in
  // both directions.
  std::vector<std::vector<Arc>> arcs(6);
  arcs[0] = {{0, 3}, {0, 4}};
  arcs[1] = {{1, 4}};
  arcs[2] = {{2, 5}};
  arcs[3] = {{3, 0}};
  arcs[4] = {{4, 0}, {4, 1}};
  arcs[5] = {{5, 2}};

  const auto z = project_all(g, store, cfg.dim);
  const auto ref = dense_micro(z, arcs, store.get("micro.wr.eat").value,
                               cfg.dim, cfg.heads, cfg.mean_norm);

  const auto& hu = tape.val(res.h_by_type[0]);
  const auto& hf = tape.val(res.h_by_type[1]);
  REQUIRE(hu.rows() == 3);
  REQUIRE(hf.rows() == 3);
  REQUIRE(hu.cols() == cfg.dim);
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c) {
      CHECK(hu.at(i, c) == doctest::Approx(ref[i][c]).epsilon(1e-10));
      CHECK(hf.at(i, c) == doctest::Approx(ref[3 + i][c]).epsilon(1e-10));
    }
}

TEST_CASE("single-neighbor nodes get weight one") {
  const HeteroGraph g = two_type_graph();
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(12, "micro");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  for (std::size_t e = 0; e < res.edges.size(); ++e) {
    const auto& edge = res.edges[e];
    // Users 1,2 and foods 0,2 have exactly one incident edge.
    const bool singleton =
        (edge.att_type == 0 && (edge.att_node == 1 || edge.att_node == 2)) ||
        (edge.att_type == 1 && (edge.att_node == 0 || edge.att_node == 2));
    if (singleton) CHECK(res.alpha[e] == 1.0);
  }
}

TEST_CASE("attention weights sum to one per node") {
  const HeteroGraph g = two_type_graph();
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(13, "micro");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  std::map<std::pair<int, int>, double> sums;
  for (std::size_t e = 0; e < res.edges.size(); ++e) {
    CHECK(res.alpha[e] > 0.0);
    sums[{res.edges[e].att_type, res.edges[e].att_node}] += res.alpha[e];
  }
  // Every node of every type appears exactly once as a segment.
  CHECK(sums.size() == 6);
  for (const auto& [node, total] : sums)
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero features give uniform weights and zero output") {
  HeteroGraph g = two_type_graph();
  g.features[0].fill(0.0);
  g.features[1].fill(0.0);
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(14, "micro");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  std::map<std::pair<int, int>, int> deg;
  for (const auto& e : res.edges) ++deg[{e.att_type, e.att_node}];
  for (std::size_t e = 0; e < res.edges.size(); ++e) {
    const auto& edge = res.edges[e];
    const double expected = 1.0 / deg.at({edge.att_type, edge.att_node});
    CHECK(res.alpha[e] == doctest::Approx(expected).epsilon(1e-14));
  }
  for (int t = 0; t < 2; ++t) {
    const auto& h = tape.val(res.h_by_type[t]);
    for (int i = 0; i < h.rows(); ++i)
      for (int c = 0; c < h.cols(); ++c) CHECK(h.at(i, c) == 0.0);
  }
}

TEST_CASE("neighborless node projects itself") {
  // Food 3 is eaten by nobody.
  HeteroGraph g;
  g.node_types = {"user", "food"};
  g.node_counts = {2, 4};
  g.features.push_back(Tensor<double>::from_rows(2, 2, {1.0, -0.5, 0.3, 0.8}));
  g.features.push_back(Tensor<double>::from_rows(
      4, 2, {0.2, 0.4, -0.6, 1.0, 0.5, -0.2, 1.5, 0.7}));
  g.id_names = {{"u0", "u1"}, {"f0", "f1", "f2", "f3"}};
  g.labels = {0, 1};
  g.relations.push_back(
      build_relation("user", "eat", "food", 2, 4, {{0, 0}, {0, 1}, {1, 2}}));

  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(15, "micro");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  // Its export entry is the marked self edge with weight 1.
  bool found = false;
  for (std::size_t e = 0; e < res.edges.size(); ++e) {
    const auto& edge = res.edges[e];
    if (edge.att_type == 1 && edge.att_node == 3) {
      CHECK(edge.relation == -1);
      CHECK(edge.nbr_type == 1);
      CHECK(edge.nbr_node == 3);
      CHECK(res.alpha[e] == 1.0);
      found = true;
    }
  }
  CHECK(found);

  // Output row equals the activated self projection.
  const auto& w = store.get("micro.wt.food").value;
  const auto& h = tape.val(res.h_by_type[1]);
  for (int c = 0; c < cfg.dim; ++c) {
    double z = 0.0;
    for (int k = 0; k < 2; ++k) z += g.features[1].at(3, k) * w.at(k, c);
    CHECK(h.at(3, c) == doctest::Approx(elu_ref(z)).epsilon(1e-12));
  }
}

TEST_CASE("swapping two relations and their transforms changes nothing") {
  // Same user-food pair carries two relation kinds with disjoint edges.
  auto build = [](std::vector<std::pair<int, int>> eat_edges,
                  std::vector<std::pair<int, int>> like_edges) {
    HeteroGraph g;
    g.node_types = {"user", "food"};
    g.node_counts = {3, 3};
    g.features.push_back(Tensor<double>::from_rows(
        3, 2, {0.5, -1.0, 1.5, 0.3, -0.7, 0.9}));
    g.features.push_back(Tensor<double>::from_rows(
        3, 3, {1.0, -0.4, 0.2, -1.2, 0.8, 0.5, 0.3, 0.6, -0.9}));
    g.id_names = {{"u0", "u1", "u2"}, {"f0", "f1", "f2"}};
    g.labels = {0, 1, 0};
    g.relations.push_back(
        build_relation("user", "eat", "food", 3, 3, std::move(eat_edges)));
    g.relations.push_back(
        build_relation("user", "likes", "food", 3, 3, std::move(like_edges)));
    return g;
  };
  const std::vector<std::pair<int, int>> e1 = {{0, 0}, {1, 1}, {2, 2}};
  const std::vector<std::pair<int, int>> e2 = {{0, 1}, {1, 2}, {2, 0}};

  const MicroConfig cfg = small_cfg();
  RngStream rng(16, "micro");
  HeteroGraph ga = build(e1, e2);
  ParamStore<double> sa;
  add_micro_params(sa, ga, cfg, rng);

  HeteroGraph gb = build(e2, e1);
  ParamStore<double> sb;
  RngStream rng2(17, "micro");
  add_micro_params(sb, gb, cfg, rng2);
  // Same type transforms; relation transforms follow their edge sets.
  sb.get("micro.wt.user").value = sa.get("micro.wt.user").value;
  sb.get("micro.wt.food").value = sa.get("micro.wt.food").value;
  sb.get("micro.wr.eat").value = sa.get("micro.wr.likes").value;
  sb.get("micro.wr.likes").value = sa.get("micro.wr.eat").value;

  Tape<double> ta;
  ParamLease<double> la(ta, sa);
  std::vector<Var> xa = {ta.leaf(ga.features[0], false),
                         ta.leaf(ga.features[1], false)};
  const auto ra = micro_forward(ta, la, ga, xa, cfg);

  Tape<double> tb;
  ParamLease<double> lb(tb, sb);
  std::vector<Var> xb = {tb.leaf(gb.features[0], false),
                         tb.leaf(gb.features[1], false)};
  const auto rb = micro_forward(tb, lb, gb, xb, cfg);

  for (int t = 0; t < 2; ++t) {
    const auto& ha = ta.val(ra.h_by_type[t]);
    const auto& hb = tb.val(rb.h_by_type[t]);
    for (int i = 0; i < ha.rows(); ++i)
      for (int c = 0; c < ha.cols(); ++c)
        CHECK(ha.at(i, c) == doctest::Approx(hb.at(i, c)).epsilon(1e-12));
  }
  // Edge weights agree pairwise (keyed without the relation id, which
  // swapped on purpose; the edge sets are disjoint so keys are unique).
  std::map<std::tuple<int, int, int, int>, double> wa, wb;
  for (std::size_t e = 0; e < ra.edges.size(); ++e)
    wa[{ra.edges[e].att_type, ra.edges[e].att_node, ra.edges[e].nbr_type,
        ra.edges[e].nbr_node}] = ra.alpha[e];
  for (std::size_t e = 0; e < rb.edges.size(); ++e)
    wb[{rb.edges[e].att_type, rb.edges[e].att_node, rb.edges[e].nbr_type,
        rb.edges[e].nbr_node}] = rb.alpha[e];
  REQUIRE(wa.size() == wb.size());
  for (const auto& [key, value] : wa)
    CHECK(value == doctest::Approx(wb.at(key)).epsilon(1e-12));
}

TEST_CASE("mean normalization is a config choice") {
  const HeteroGraph g = two_type_graph();
  MicroConfig cfg = small_cfg();
  cfg.mean_norm = false;
  ParamStore<double> store;
  RngStream rng(18, "micro");
  add_micro_params(store, g, cfg, rng);

  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x = {tape.leaf(g.features[0], false),
                        tape.leaf(g.features[1], false)};
  const auto res = micro_forward(tape, lease, g, x, cfg);

  std::vector<std::vector<Arc>> arcs(6);
  arcs[0] = {{0, 3}, {0, 4}};
  arcs[1] = {{1, 4}};
  arcs[2] = {{2, 5}};
  arcs[3] = {{3, 0}};
  arcs[4] = {{4, 0}, {4, 1}};
  arcs[5] = {{5, 2}};
  const auto z = project_all(g, store, cfg.dim);
  const auto ref = dense_micro(z, arcs, store.get("micro.wr.eat").value,
                               cfg.dim, cfg.heads, false);
  const auto& hu = tape.val(res.h_by_type[0]);
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c)
      CHECK(hu.at(i, c) == doctest::Approx(ref[i][c]).epsilon(1e-10));

  // With the mean factor the multi-neighbor rows genuinely differ.
  MicroConfig mcfg = small_cfg();
  Tape<double> t2;
  ParamLease<double> l2(t2, store);
  std::vector<Var> x2 = {t2.leaf(g.features[0], false),
                         t2.leaf(g.features[1], false)};
  const auto res2 = micro_forward(t2, l2, g, x2, mcfg);
  const auto& hu2 = t2.val(res2.h_by_type[0]);
  bool any_diff = false;
  for (int c = 0; c < cfg.dim; ++c)
    any_diff = any_diff || hu.at(0, c) != hu2.at(0, c);
  CHECK(any_diff);
}

TEST_CASE("shape validation") {
  const HeteroGraph g = two_type_graph();
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(19, "micro");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  // Missing one feature block.
  std::vector<Var> one = {tape.leaf(g.features[0], false)};
  CHECK_THROWS_AS(micro_forward(tape, lease, g, one, cfg), Error);
  // Wrong row count for the food block.
  const auto bad = Tensor<double>::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
  std::vector<Var> wrong = {tape.leaf(g.features[0], false),
                            tape.leaf(bad, false)};
  CHECK_THROWS_AS(micro_forward(tape, lease, g, wrong, cfg), Error);
}

TEST_CASE("gradients agree with finite differences") {
  const HeteroGraph g = two_type_graph();
  const MicroConfig cfg = small_cfg();
  ParamStore<double> store;
  RngStream rng(20, "micro");
  add_micro_params(store, g, cfg, rng);

  Tensor<double> mix_u(3, cfg.dim), mix_f(3, cfg.dim);
  RngStream mr(21, "mix");
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < cfg.dim; ++c) {
      mix_u.at(i, c) = mr.normal();
      mix_f.at(i, c) = mr.normal();
    }

  Tensor<double> xu = g.features[0];
  Tensor<double> xf = g.features[1];
  auto loss_of = [&](std::vector<Tensor<double>>* feat_grads,
                     std::map<std::string, Tensor<double>>* param_grads) {
    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    const Var vu = tape.leaf(xu, true);
    const Var vf = tape.leaf(xf, true);
    const auto res = micro_forward(tape, lease, g, {vu, vf}, cfg);
    const Var loss = tape.add(
        tape.sum_all(tape.mul(res.h_by_type[0], tape.constant(mix_u))),
        tape.sum_all(tape.mul(res.h_by_type[1], tape.constant(mix_f))));
    const double value = tape.val(loss).at(0, 0);
    if (feat_grads || param_grads) {
      tape.backward(loss);
      if (feat_grads) {
        feat_grads->push_back(tape.grad(vu));
        feat_grads->push_back(tape.grad(vf));
      }
      if (param_grads)
        for (auto& [p, gr] : lease.grads()) (*param_grads)[p->name] = *gr;
    }
    return value;
  };

  std::vector<Tensor<double>> feat_grads;
  std::map<std::string, Tensor<double>> param_grads;
  loss_of(&feat_grads, &param_grads);

  const double h = 1e-6;
  double worst = 0.0;
  auto probe = [&](Tensor<double>& target, const Tensor<double>& analytic) {
    for (std::size_t e = 0; e < target.size(); ++e) {
      const double saved = target.data()[e];
      const double step = h * std::max(1.0, std::abs(saved));
      target.data()[e] = saved + step;
      const double up = loss_of(nullptr, nullptr);
      target.data()[e] = saved - step;
      const double down = loss_of(nullptr, nullptr);
      target.data()[e] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic.data()[e];
      const double rel =
          std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, rel);
    }
  };

  probe(xu, feat_grads[0]);
  probe(xf, feat_grads[1]);
  for (auto* p : store.all()) probe(p->value, param_grads.at(p->name));
  CHECK(worst < 1e-4);
}

namespace {

// Four-type fixture for the export path: 3 users, 4 foods, 2 habits,
// 3 ingredients. Food 2 carries no ingredients, food 3 belongs to nobody's
// plate, user 2 only reports a habit.
HeteroGraph diet_graph(bool zero_features = false) {
  HeteroGraph g;
  g.node_types = {"user", "food", "habit", "ingredient"};
  g.node_counts = {3, 4, 2, 3};
  RngStream rng(5, "export-feats");
  for (int t = 0; t < 4; ++t) {
    Tensor<double> f(g.node_counts[t], 4);
    if (!zero_features)
      for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
    g.features.push_back(std::move(f));
  }
  g.id_names.resize(4);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < g.node_counts[t]; ++i)
      g.id_names[t].push_back(g.node_types[t].substr(0, 1) +
                              std::to_string(i));
  g.labels = {0, 1, 1};
  g.relations.push_back(build_relation(
      "user", "eat", "food", 3, 4, {{0, 0}, {0, 1}, {0, 2}, {1, 1}}));
  g.relations.push_back(
      build_relation("user", "have", "habit", 3, 2, {{0, 0}, {0, 1}, {2, 1}}));
  g.relations.push_back(build_relation(
      "food", "contain", "ingredient", 4, 3, {{0, 0}, {0, 1}, {1, 2}, {3, 0}}));
  return g;
}

}  // namespace

TEST_CASE("attention export ranks a user's whole neighborhood") {
  const HeteroGraph g = diet_graph();
  MicroConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  ParamStore<double> store;
  RngStream rng(31, "export-params");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x;
  for (const auto& f : g.features) x.push_back(tape.leaf(f, false));
  const MicroResult res = micro_forward(tape, lease, g, x, cfg);

  const int food_t = g.type_index("food");
  const int habit_t = g.type_index("habit");
  const int ingredient_t = g.type_index("ingredient");

  const AttentionRecord rec =
      export_user_attention(g, res.edges, res.alpha, 0, 10);
  CHECK(rec.user == 0);
  REQUIRE(rec.neighbors.size() == 5);  // 3 foods + 2 habits
  double total = 0.0;
  for (const auto& it : rec.neighbors) total += it.score;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < rec.neighbors.size(); ++i)
    CHECK(rec.neighbors[i - 1].score >= rec.neighbors[i].score);

  // Fewer foods than the cut: all of them come back, ranked.
  REQUIRE(rec.top_foods.size() == 3);
  REQUIRE(rec.top_habits.size() == 2);

  // The food ranking must equal an independent sort of the raw export.
  std::vector<std::pair<double, int>> oracle;
  for (std::size_t e = 0; e < res.edges.size(); ++e) {
    const MicroEdge& me = res.edges[e];
    if (me.att_type == g.user_type() && me.att_node == 0 &&
        me.nbr_type == food_t)
      oracle.push_back({res.alpha[e], me.nbr_node});
  }
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  REQUIRE(oracle.size() == rec.top_foods.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(rec.top_foods[i].node == oracle[i].second);
    CHECK(rec.top_foods[i].score == oracle[i].first);
  }

  // Ingredient sub-rankings come from the food's own attention row.
  REQUIRE(rec.food_details.size() == rec.top_foods.size());
  for (std::size_t i = 0; i < rec.food_details.size(); ++i) {
    const FoodIngredients& fi = rec.food_details[i];
    CHECK(fi.food == rec.top_foods[i].node);
    std::vector<std::pair<double, int>> want;
    for (std::size_t e = 0; e < res.edges.size(); ++e) {
      const MicroEdge& me = res.edges[e];
      if (me.att_type == food_t && me.att_node == fi.food &&
          me.nbr_type == ingredient_t)
        want.push_back({res.alpha[e], me.nbr_node});
    }
    std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    REQUIRE(fi.ingredients.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(fi.ingredients[k].node == want[k].second);
      CHECK(fi.ingredients[k].score == want[k].first);
      CHECK(fi.ingredients[k].type == ingredient_t);
    }
  }
  // Food 2 has no ingredients; its sub-list must be empty, not missing.
  for (const auto& fi : rec.food_details)
    if (fi.food == 2) CHECK(fi.ingredients.empty());

  SUBCASE("narrow cut keeps the leaders") {
    const AttentionRecord cut =
        export_user_attention(g, res.edges, res.alpha, 0, 2);
    REQUIRE(cut.top_foods.size() == 2);
    CHECK(cut.top_foods[0].node == rec.top_foods[0].node);
    CHECK(cut.top_foods[1].node == rec.top_foods[1].node);
    CHECK(cut.food_details.size() == 2);
    CHECK(cut.top_habits.size() == 2);
    CHECK(cut.neighbors.size() == 5);  // the full list stays
  }
  SUBCASE("zero cut still reports the neighborhood") {
    const AttentionRecord none =
        export_user_attention(g, res.edges, res.alpha, 0, 0);
    CHECK(none.top_foods.empty());
    CHECK(none.top_habits.empty());
    CHECK(none.food_details.empty());
    CHECK(none.neighbors.size() == 5);
  }
  SUBCASE("habit-only user") {
    const AttentionRecord u2 =
        export_user_attention(g, res.edges, res.alpha, 2, 10);
    REQUIRE(u2.neighbors.size() == 1);
    CHECK(u2.neighbors[0].type == habit_t);
    CHECK(u2.neighbors[0].node == 1);
    CHECK(u2.neighbors[0].score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(u2.top_foods.empty());
  }
}

TEST_CASE("attention export breaks equal scores by ascending id") {
  const HeteroGraph g = diet_graph(true);  // all-zero features -> uniform
  MicroConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  ParamStore<double> store;
  RngStream rng(31, "export-params");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x;
  for (const auto& f : g.features) x.push_back(tape.leaf(f, false));
  const MicroResult res = micro_forward(tape, lease, g, x, cfg);

  const AttentionRecord rec =
      export_user_attention(g, res.edges, res.alpha, 0, 10);
  REQUIRE(rec.neighbors.size() == 5);
  for (const auto& it : rec.neighbors)
    CHECK(it.score == doctest::Approx(0.2).epsilon(1e-12));
  // Equal scores: foods before habits (type order), ids ascending inside.
  const int food_t = g.type_index("food");
  const int habit_t = g.type_index("habit");
  CHECK(rec.neighbors[0].type == food_t);
  CHECK(rec.neighbors[0].node == 0);
  CHECK(rec.neighbors[1].node == 1);
  CHECK(rec.neighbors[2].node == 2);
  CHECK(rec.neighbors[3].type == habit_t);
  CHECK(rec.neighbors[3].node == 0);
  CHECK(rec.neighbors[4].node == 1);
  CHECK(rec.top_foods.size() == 3);
  CHECK(rec.top_foods[0].node == 0);
}

TEST_CASE("attention export rejects bad input") {
  const HeteroGraph g = diet_graph();
  MicroConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  ParamStore<double> store;
  RngStream rng(31, "export-params");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x;
  for (const auto& f : g.features) x.push_back(tape.leaf(f, false));
  const MicroResult res = micro_forward(tape, lease, g, x, cfg);

  CHECK_THROWS_AS(export_user_attention(g, res.edges, res.alpha, 3, 10),
                  Error);
  CHECK_THROWS_AS(export_user_attention(g, res.edges, res.alpha, -1, 10),
                  Error);
  std::vector<double> short_alpha(res.alpha.begin(), res.alpha.end() - 1);
  CHECK_THROWS_AS(export_user_attention(g, res.edges, short_alpha, 0, 10),
                  Error);
  CHECK_THROWS_AS(export_user_attention(g, res.edges, res.alpha, 0, -1),
                  Error);
}

TEST_CASE("attention export survives a graph without the diet types") {
  // Self fallback row: user 1 eats nothing in a two-type graph.
  HeteroGraph g;
  g.node_types = {"user", "food"};
  g.node_counts = {2, 1};
  g.features.push_back(Tensor<double>::from_rows(2, 2, {0.4, -0.2, 1.1, 0.6}));
  g.features.push_back(Tensor<double>::from_rows(1, 2, {0.9, -0.5}));
  g.id_names = {{"u0", "u1"}, {"f0"}};
  g.labels = {0, 1};
  g.relations.push_back(build_relation("user", "eat", "food", 2, 1, {{0, 0}}));

  MicroConfig cfg;
  cfg.dim = 4;
  cfg.heads = 2;
  ParamStore<double> store;
  RngStream rng(8, "fallback");
  add_micro_params(store, g, cfg, rng);
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  std::vector<Var> x;
  for (const auto& f : g.features) x.push_back(tape.leaf(f, false));
  const MicroResult res = micro_forward(tape, lease, g, x, cfg);

  const AttentionRecord rec =
      export_user_attention(g, res.edges, res.alpha, 1, 10);
  REQUIRE(rec.neighbors.size() == 1);
  CHECK(rec.neighbors[0].relation == -1);
  CHECK(rec.neighbors[0].node == 1);
  CHECK(rec.neighbors[0].type == g.user_type());
  CHECK(rec.neighbors[0].score == 1.0);
  // No habit or ingredient type declared: the typed lists stay empty.
  CHECK(rec.top_habits.empty());
  const AttentionRecord u0 =
      export_user_attention(g, res.edges, res.alpha, 0, 10);
  CHECK(u0.top_foods.size() == 1);
  CHECK(u0.food_details.size() == 1);
  CHECK(u0.food_details[0].ingredients.empty());
}
