#include <algorithm>
#include <cmath>
#include <string>

#include "dietgraph/hetgraph.hpp"
#include "dietgraph/rng.hpp"

namespace dietgraph {

namespace {

void check_cfg(const SyntheticConfig& cfg) {
  const int counts[] = {cfg.n_users, cfg.n_foods, cfg.n_habits,
                        cfg.n_ingredients, cfg.n_categories};
  for (int c : counts)
    if (c < 1) throw Error("synthetic: node counts must be at least 1");
  const int dims[] = {cfg.user_dim, cfg.food_dim, cfg.habit_dim,
                      cfg.ingredient_dim, cfg.category_dim};
  for (int d : dims)
    if (d < 1) throw Error("synthetic: feature dims must be at least 1");
  const double fracs[] = {cfg.class_signal, cfg.noise_rate, cfg.positive_frac};
  for (double f : fracs)
    if (f < 0.0 || f > 1.0)
      throw Error("synthetic: fractions must lie in [0, 1]");
  if (cfg.deg_eat < 1 || cfg.deg_have < 1 || cfg.deg_contain < 1 ||
      cfg.deg_belong < 1)
    throw Error("synthetic: degree parameters must be at least 1");
}

// Splits shuffled ids into one discriminative pool per class; remaining ids
// are neutral (-1).
std::vector<int> make_pools(int n, double frac, RngStream& rng,
                            std::vector<std::vector<int>>& pools) {
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  rng.shuffle(ids.data(), ids.size());
  const int n_disc = static_cast<int>(std::lround(n * frac));
  const int half = n_disc / 2;
  std::vector<int> cls(n, -1);
  pools.assign(2, {});
  for (int i = 0; i < half; ++i) {
    cls[ids[i]] = 0;
    pools[0].push_back(ids[i]);
  }
  for (int i = half; i < n_disc; ++i) {
    cls[ids[i]] = 1;
    pools[1].push_back(ids[i]);
  }
  std::sort(pools[0].begin(), pools[0].end());
  std::sort(pools[1].begin(), pools[1].end());
  return cls;
}

// count distinct targets drawn uniformly from pool via partial
// Fisher-Yates. The pool's residual order feeds the next call, which keeps
// every draw uniform and collision-free.
void sample_distinct(int src, int count, std::vector<int>& pool,
                     RngStream& rng,
                     std::vector<std::pair<int, int>>& edges) {
  for (int t = 0; t < count; ++t) {
    const std::size_t j = t + rng.uniform_index(pool.size() - t);
    std::swap(pool[t], pool[j]);
    edges.push_back({src, pool[t]});
  }
}

// deg distinct targets for one source. Pool membership is fixed per edge
// slot first (cross-class with probability noise), so the realized
// cross-class fraction is an unbiased estimate of noise even when a pool
// is nearly exhausted.
void sample_pool_edges(int src, int own, int deg, double noise,
                       std::vector<std::vector<int>>& pools, RngStream& rng,
                       std::vector<std::pair<int, int>>& edges) {
  int n_cross = 0;
  for (int t = 0; t < deg; ++t) n_cross += rng.uniform() < noise;
  sample_distinct(src, deg - n_cross, pools[own], rng, edges);
  sample_distinct(src, n_cross, pools[1 - own], rng, edges);
}

Tensor<double> class_features(int n, int dim, const std::vector<int>& cls,
                              double shift, RngStream& rng) {
  // Per-class prototypes plus unit noise; neutral nodes get noise only.
  Tensor<double> proto(2, dim);
  for (std::size_t i = 0; i < proto.size(); ++i)
    proto.data()[i] = rng.normal(0.0, shift);
  Tensor<double> f(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double base = cls[i] < 0 ? 0.0 : proto.at(cls[i], j);
      f.at(i, j) = base + rng.normal();
    }
  }
  return f;
}

std::vector<std::string> make_ids(const char* prefix, int n) {
  std::vector<std::string> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i);
  return ids;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  check_cfg(cfg);

  // Labels: a shuffled prefix of users is positive.
  std::vector<int> labels(cfg.n_users, 0);
  {
    std::vector<int> ids(cfg.n_users);
    for (int i = 0; i < cfg.n_users; ++i) ids[i] = i;
    RngStream rng(cfg.seed, "labels");
    rng.shuffle(ids.data(), ids.size());
    const int n_pos =
        static_cast<int>(std::lround(cfg.n_users * cfg.positive_frac));
    for (int i = 0; i < n_pos; ++i) labels[ids[i]] = 1;
  }

  SyntheticTruth truth;
  std::vector<std::vector<int>> food_pools, habit_pools;
  {
    RngStream rng(cfg.seed, "pools");
    truth.food_class =
        make_pools(cfg.n_foods, cfg.class_signal, rng, food_pools);
    truth.habit_class =
        make_pools(cfg.n_habits, cfg.class_signal, rng, habit_pools);
  }
  const std::size_t min_food_pool =
      std::min(food_pools[0].size(), food_pools[1].size());
  const std::size_t min_habit_pool =
      std::min(habit_pools[0].size(), habit_pools[1].size());
  if (static_cast<std::size_t>(cfg.deg_eat) > min_food_pool)
    throw Error("synthetic: deg_eat exceeds available discriminative foods");
  if (static_cast<std::size_t>(cfg.deg_have) > min_habit_pool)
    throw Error("synthetic: deg_have exceeds available discriminative habits");
  if (cfg.deg_contain > cfg.n_ingredients)
    throw Error("synthetic: deg_contain exceeds available ingredients");
  if (cfg.deg_belong > cfg.n_categories)
    throw Error("synthetic: deg_belong exceeds available categories");

  std::vector<std::pair<int, int>> eat, have, contain, belong;
  {
    RngStream rng(cfg.seed, "edges-eat");
    for (int u = 0; u < cfg.n_users; ++u)
      sample_pool_edges(u, labels[u], cfg.deg_eat, cfg.noise_rate, food_pools,
                        rng, eat);
  }
  {
    RngStream rng(cfg.seed, "edges-have");
    for (int u = 0; u < cfg.n_users; ++u)
      sample_pool_edges(u, labels[u], cfg.deg_have, cfg.noise_rate,
                        habit_pools, rng, have);
  }
  {
    RngStream rng(cfg.seed, "edges-contain");
    std::vector<std::vector<int>> all = {{}, {}};
    all[0].resize(cfg.n_ingredients);
    for (int i = 0; i < cfg.n_ingredients; ++i) all[0][i] = i;
    all[1] = all[0];
    for (int f = 0; f < cfg.n_foods; ++f)
      sample_pool_edges(f, 0, cfg.deg_contain, 0.0, all, rng, contain);
  }
  {
    RngStream rng(cfg.seed, "edges-belong");
    std::vector<std::vector<int>> all = {{}, {}};
    all[0].resize(cfg.n_categories);
    for (int i = 0; i < cfg.n_categories; ++i) all[0][i] = i;
    all[1] = all[0];
    for (int f = 0; f < cfg.n_foods; ++f)
      sample_pool_edges(f, 0, cfg.deg_belong, 0.0, all, rng, belong);
  }

  HeteroGraph g;
  // Type order matches manifest ingestion: user first, rest sorted.
  g.node_types = {"user", "category", "food", "habit", "ingredient"};
  g.node_counts = {cfg.n_users, cfg.n_categories, cfg.n_foods, cfg.n_habits,
                   cfg.n_ingredients};
  g.labels = labels;
  {
    RngStream rng(cfg.seed, "features-user");
    std::vector<int> ucls = labels;
    if (cfg.user_feature_shift <= 0.0) ucls.assign(cfg.n_users, -1);
    g.features.push_back(class_features(cfg.n_users, cfg.user_dim, ucls,
                                        cfg.user_feature_shift, rng));
  }
  {
    RngStream rng(cfg.seed, "features-category");
    const std::vector<int> none(cfg.n_categories, -1);
    g.features.push_back(
        class_features(cfg.n_categories, cfg.category_dim, none, 0.0, rng));
  }
  {
    RngStream rng(cfg.seed, "features-food");
    g.features.push_back(class_features(cfg.n_foods, cfg.food_dim,
                                        truth.food_class, cfg.feature_shift,
                                        rng));
  }
  {
    RngStream rng(cfg.seed, "features-habit");
    g.features.push_back(class_features(cfg.n_habits, cfg.habit_dim,
                                        truth.habit_class, cfg.feature_shift,
                                        rng));
  }
  {
    RngStream rng(cfg.seed, "features-ingredient");
    const std::vector<int> none(cfg.n_ingredients, -1);
    g.features.push_back(
        class_features(cfg.n_ingredients, cfg.ingredient_dim, none, 0.0, rng));
  }
  g.id_names = {make_ids("u", cfg.n_users), make_ids("c", cfg.n_categories),
                make_ids("f", cfg.n_foods), make_ids("h", cfg.n_habits),
                make_ids("i", cfg.n_ingredients)};

  g.relations.push_back(build_relation("user", "eat", "food", cfg.n_users,
                                       cfg.n_foods, std::move(eat)));
  g.relations.push_back(build_relation("user", "have", "habit", cfg.n_users,
                                       cfg.n_habits, std::move(have)));
  g.relations.push_back(build_relation("food", "contain", "ingredient",
                                       cfg.n_foods, cfg.n_ingredients,
                                       std::move(contain)));
  g.relations.push_back(build_relation("food", "belong_to", "category",
                                       cfg.n_foods, cfg.n_categories,
                                       std::move(belong)));
  g.validate();

  SyntheticData out;
  out.graph = std::move(g);
  out.split = split_nodes(cfg.n_users, cfg.split_ratios, cfg.seed);
  out.truth = std::move(truth);
  return out;
}

}  // namespace dietgraph
