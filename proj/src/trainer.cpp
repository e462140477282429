#include "dietgraph/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <utility>

#include "dietgraph/csv.hpp"
#include "dietgraph/error.hpp"
#include "dietgraph/optim.hpp"

namespace dietgraph {

namespace {

// Zero off the split, uniform (or inverse-class-frequency) on it. The mask
// is what keeps every other label out of the gradient.
std::vector<double> masked_weights(const std::vector<int>& labels,
                                   const std::vector<int>& ids, int n,
                                   bool class_weighting) {
  std::vector<double> w(n, 0.0);
  for (int id : ids) {
    if (id < 0 || id >= n)
      throw Error("train: split id " + std::to_string(id) + " outside graph");
    w[id] = 1.0;
  }
  if (!class_weighting || ids.empty()) return w;
  long count[2] = {0, 0};
  for (int id : ids) {
    const int y = labels[id];
    if (y == 0 || y == 1) ++count[y];
  }
  if (count[0] == 0 || count[1] == 0) return w;  // degenerate, keep uniform
  const double total = static_cast<double>(ids.size());
  const double cw[2] = {total / (2.0 * count[0]), total / (2.0 * count[1])};
  for (int id : ids) w[id] = cw[labels[id]];
  return w;
}

std::vector<Tensor<double>> snapshot_values(ParamStore<double>& store) {
  std::vector<Tensor<double>> out;
  for (Param<double>* p : store.all()) out.push_back(p->value);
  return out;
}

void restore_values(ParamStore<double>& store,
                    const std::vector<Tensor<double>>& snap) {
  auto params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

// Runs n independent jobs on up to `threads` workers. Results must not
// depend on scheduling; the first failure wins and is rethrown after the
// pool drains.
void run_jobs(int threads, std::size_t n,
              const std::function<void(std::size_t)>& job) {
  const int workers =
      std::max(1, std::min(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) job(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string trim_zeros(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Shared stage-1 forward: leaf the features, run the enabled branches,
// fuse. Macro-only runs touch only the user features; anything with the
// micro branch leafs every type. feat_leaves reports (type, leaf) pairs
// for gradient probing.
Var stage1_embed(Tape<double>& tape, const ParamLease<double>& lease,
                 const HeteroGraph& g,
                 const std::vector<MetaPathSubgraph>& subs, const Config& cfg,
                 const std::vector<int>* visible, bool feats_need_grad,
                 std::vector<std::pair<int, Var>>* feat_leaves,
                 MacroResult* macro_out, MicroResult* micro_out) {
  const TrainConfig& tc = cfg.train;
  const int ut = g.user_type();
  std::vector<Var> x(g.features.size());
  std::vector<std::pair<int, Var>> leaves;
  for (std::size_t t = 0; t < g.features.size(); ++t) {
    if (!tc.use_micro && static_cast<int>(t) != ut) continue;
    x[t] = tape.leaf(g.features[t], feats_need_grad);
    leaves.emplace_back(static_cast<int>(t), x[t]);
  }
  Var h;
  bool have = false;
  if (tc.use_macro) {
    MacroResult mr = macro_forward(tape, lease, subs, x[ut], cfg.macro,
                                   visible);
    h = mr.fused;
    have = true;
    if (macro_out) *macro_out = std::move(mr);
  }
  if (tc.use_micro) {
    MicroResult mi = micro_forward(tape, lease, g, x, cfg.micro);
    const Var hu = mi.h_by_type[ut];
    h = have ? fuse_embeddings(tape, lease, h, hu) : hu;
    if (micro_out) *micro_out = std::move(mi);
  }
  if (feat_leaves) *feat_leaves = std::move(leaves);
  return h;
}

// Registers the stage-1 parameter set in pipeline order and returns the
// embedding width.
int add_stage1_params(ParamStore<double>& store, const HeteroGraph& g,
                      const std::vector<std::string>& path_names,
                      const Config& cfg, RngStream& rng) {
  const TrainConfig& tc = cfg.train;
  const int d_user = g.features[g.user_type()].cols();
  int d_h = 0;
  if (tc.use_macro) {
    add_macro_params(store, d_user, path_names, cfg.macro, rng);
    d_h = cfg.macro.hidden_dim;
  }
  if (tc.use_micro) {
    add_micro_params(store, g, cfg.micro, rng);
    d_h = cfg.micro.dim;
  }
  if (tc.use_macro && tc.use_micro) {
    add_fuse_params(store, cfg.macro.hidden_dim + cfg.micro.dim, tc.fused_dim,
                    rng);
    d_h = tc.fused_dim;
  }
  store.add_glorot("probe.w", d_h, 2, rng);
  store.add_zeros("probe.b", 1, 2);
  return d_h;
}

std::vector<MetaPathSubgraph> build_subgraphs(
    const HeteroGraph& g, const std::vector<MetaPathSpec>& specs,
    std::vector<std::string>* names) {
  std::vector<MetaPathSubgraph> subs;
  for (const MetaPathSpec& mp : specs) {
    const MetaPath path = metapath_from_name(g, mp.name);
    subs.push_back(extract_subgraph(count_paths(g, path), mp.k, mp.name));
    if (names) names->push_back(mp.name);
  }
  return subs;
}

}  // namespace

PipelineResult train_pipeline(const HeteroGraph& g, const SplitSpec& split,
                              const Config& cfg, std::uint64_t seed) {
  const TrainConfig& tc = cfg.train;
  if (!tc.use_macro && !tc.use_micro)
    throw Error("train: both aggregator branches disabled");
  const int ut = g.user_type();
  const int n = g.node_counts[ut];
  const std::vector<int>& labels = g.labels;
  if (labels.size() != static_cast<std::size_t>(n))
    throw Error("train: need one label per user");
  if (cfg.metapaths.empty()) throw Error("train: no metapaths configured");

  PipelineResult res;
  res.seed = seed;

  std::vector<std::string> path_names;
  const std::vector<MetaPathSubgraph> subs =
      build_subgraphs(g, cfg.metapaths, &path_names);
  res.uni = union_graphs(subs);

  // Stage 1: aggregators plus a throwaway linear head, trained on the
  // training users only.
  ParamStore<double> store;
  RngStream prng(seed, "stage1-params");
  add_stage1_params(store, g, path_names, cfg, prng);

  const std::vector<double> w_train =
      masked_weights(labels, split.train_ids, n, tc.class_weighting);

  Adam<double> opt1(tc.stage1_lr, 0.9, 0.999, 1e-8, tc.stage1_weight_decay);
  for (int epoch = 0; epoch < tc.stage1_epochs; ++epoch) {
    try {
      Tape<double> tape;
      ParamLease<double> lease(tape, store);
      // visible = train ids while fitting, everyone at the snapshot.
      const Var h = stage1_embed(tape, lease, g, subs, cfg, &split.train_ids,
                                 false, nullptr, nullptr, nullptr);
      const Var logits =
          tape.add_bias(tape.matmul(h, lease["probe.w"]), lease["probe.b"]);
      const Var loss = tape.softmax_xent(logits, labels, w_train);
      res.stage1_loss.push_back(tape.val(loss).at(0, 0));
      tape.backward(loss);
      opt1.step(lease.grads());
    } catch (const Error& e) {
      throw Error("stage 1 aborted at epoch " + std::to_string(epoch) +
                  " (seed " + std::to_string(seed) + "): " + e.what());
    }
  }

  // End-of-training snapshot in inference mode; this is the embedding the
  // refiner and the final model both consume.
  {
    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    MacroResult macro_snap;
    MicroResult micro_snap;
    const Var h = stage1_embed(tape, lease, g, subs, cfg, nullptr, false,
                               nullptr, tc.use_macro ? &macro_snap : nullptr,
                               tc.use_micro ? &micro_snap : nullptr);
    res.fused = tape.val(h);
    if (tc.use_macro) {
      res.macro_attn.path_names = path_names;
      const Tensor<double>& beta = tape.val(macro_snap.beta);
      for (int m = 0; m < beta.cols(); ++m)
        res.macro_attn.beta.push_back(beta.at(0, m));
      res.macro_attn.alpha = std::move(macro_snap.alpha);
    }
    if (tc.use_micro) {
      res.micro_edges = std::move(micro_snap.edges);
      res.micro_alpha = std::move(micro_snap.alpha);
    }
  }

  if (tc.use_refine) {
    const auto trainset = build_refine_trainset(res.uni, split, labels);
    ParamStore<double> rstore;
    RngStream rrng(seed, "refiner-params");
    add_refiner_params(rstore, res.fused.cols(), cfg.refine.hidden_dim, rrng);
    res.refiner = train_refiner(rstore, res.fused, trainset, cfg.refine);
    res.refined =
        score_and_filter(rstore, res.fused, res.uni, cfg.refine.threshold);
  } else {
    res.refined.n_users = res.uni.n_users;
    res.refined.edges = res.uni.edges;
  }
  res.unified_homophily = edge_homophily(res.uni.edges, labels);
  res.kept_homophily = edge_homophily(res.refined.edges, labels);
  res.unified_homophily_test =
      edge_homophily(res.uni.edges, labels, &split.test_ids);
  res.kept_homophily_test =
      edge_homophily(res.refined.edges, labels, &split.test_ids);

  // Stage 2: one-layer graph model over the kept edges. Validation loss
  // picks the weights; valid labels touch nothing but that choice.
  const Csr<double> adj = norm_adjacency(n, res.refined.edges);
  ParamStore<double> store2;
  RngStream srng(seed, "stage2-params");
  add_final_params(store2, res.fused.cols(), tc.final_hidden, srng);
  RngStream drop_rng(seed, "stage2-dropout");
  const bool have_valid = !split.valid_ids.empty();
  const std::vector<double> w_valid =
      masked_weights(labels, split.valid_ids, n, false);

  Adam<double> opt2(tc.stage2_lr, 0.9, 0.999, 1e-8, tc.stage2_weight_decay);
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<double>> best_params;
  for (int epoch = 0; epoch < tc.stage2_epochs; ++epoch) {
    try {
      {
        Tape<double> tape;
        ParamLease<double> lease(tape, store2);
        const Var logits =
            final_forward(tape, lease, tape.leaf(res.fused, false), adj,
                          tc.dropout, drop_rng, true);
        const Var loss = tape.softmax_xent(logits, labels, w_train);
        res.stage2_train_loss.push_back(tape.val(loss).at(0, 0));
        tape.backward(loss);
        opt2.step(lease.grads());
      }
      if (have_valid) {
        Tape<double> tape;
        ParamLease<double> lease(tape, store2);
        const Var logits =
            final_forward(tape, lease, tape.leaf(res.fused, false), adj,
                          tc.dropout, drop_rng, false);
        const Var loss = tape.softmax_xent(logits, labels, w_valid);
        const double v = tape.val(loss).at(0, 0);
        res.stage2_valid_loss.push_back(v);
        if (v < best_loss) {
          best_loss = v;
          res.best_epoch = epoch;
          best_params = snapshot_values(store2);
        }
      }
    } catch (const Error& e) {
      throw Error("stage 2 aborted at epoch " + std::to_string(epoch) +
                  " (seed " + std::to_string(seed) + "): " + e.what());
    }
  }
  if (res.best_epoch >= 0)
    restore_values(store2, best_params);
  else if (tc.stage2_epochs > 0)
    res.best_epoch = tc.stage2_epochs - 1;  // no validation set: keep last

  {
    Tape<double> tape;
    ParamLease<double> lease(tape, store2);
    const Var hidden =
        final_hidden(tape, lease, tape.leaf(res.fused, false), adj);
    const Var logits = tape.add_bias(tape.matmul(hidden, lease["head.w"]),
                                     lease["head.b"]);
    const Var probs = tape.row_softmax(logits);
    res.embeddings = tape.val(hidden);
    const Tensor<double>& p = tape.val(probs);
    res.scores.resize(n);
    res.hard_labels.resize(n);
    for (int i = 0; i < n; ++i) {
      res.scores[i] = p.at(i, 1);
      res.hard_labels[i] = p.at(i, 1) > p.at(i, 0) ? 1 : 0;
    }
  }

  std::vector<double> s_test;
  std::vector<int> h_test, y_test;
  for (int id : split.test_ids) {
    if (id < 0 || id >= n)
      throw Error("train: test id " + std::to_string(id) + " outside graph");
    s_test.push_back(res.scores[id]);
    h_test.push_back(res.hard_labels[id]);
    y_test.push_back(labels[id]);
  }
  res.test_metrics = evaluate(s_test, h_test, y_test);
  return res;
}

MetricsReport aggregate_metrics(const std::vector<std::uint64_t>& seeds,
                                const std::vector<Metrics>& per_seed) {
  if (seeds.size() != per_seed.size())
    throw Error("aggregate_metrics: seed/metrics length mismatch");
  if (per_seed.empty()) throw Error("aggregate_metrics: no runs");
  MetricsReport rep;
  rep.seeds = seeds;
  rep.per_seed = per_seed;
  std::vector<double> acc, pre, rec, f1, auc;
  for (const Metrics& m : per_seed) {
    acc.push_back(m.accuracy);
    pre.push_back(m.precision);
    rec.push_back(m.recall);
    f1.push_back(m.f1);
    if (m.auc_defined) auc.push_back(m.auc);
  }
  rep.accuracy = aggregate(acc);
  rep.precision = aggregate(pre);
  rep.recall = aggregate(rec);
  rep.f1 = aggregate(f1);
  rep.auc_defined = auc.size();
  if (!auc.empty()) rep.auc = aggregate(auc);
  return rep;
}

std::vector<PipelineResult> run_seeds(const HeteroGraph& g,
                                      const SplitSpec& split,
                                      const Config& cfg) {
  const std::vector<std::uint64_t>& seeds = cfg.train.seeds;
  if (seeds.empty()) throw Error("train: no seeds configured");
  std::vector<PipelineResult> out(seeds.size());
  run_jobs(cfg.threads, seeds.size(), [&](std::size_t i) {
    out[i] = train_pipeline(g, split, cfg, seeds[i]);
  });
  return out;
}

std::vector<AblationRow> run_ablation_grid(const HeteroGraph& g,
                                           const SplitSpec& split,
                                           const Config& cfg) {
  static constexpr bool kFlags[6][3] = {
      {true, true, true},   {true, true, false}, {true, false, true},
      {false, true, true},  {true, false, false}, {false, true, false},
  };
  const std::vector<std::uint64_t>& seeds = cfg.train.seeds;
  if (seeds.empty()) throw Error("train: no seeds configured");
  std::vector<std::vector<Metrics>> cell(6,
                                         std::vector<Metrics>(seeds.size()));
  run_jobs(cfg.threads, 6 * seeds.size(), [&](std::size_t j) {
    const std::size_t r = j / seeds.size();
    const std::size_t s = j % seeds.size();
    Config variant = cfg;
    variant.train.use_macro = kFlags[r][0];
    variant.train.use_micro = kFlags[r][1];
    variant.train.use_refine = kFlags[r][2];
    cell[r][s] = train_pipeline(g, split, variant, seeds[s]).test_metrics;
  });
  std::vector<AblationRow> rows(6);
  for (int r = 0; r < 6; ++r) {
    rows[r].use_macro = kFlags[r][0];
    rows[r].use_micro = kFlags[r][1];
    rows[r].use_refine = kFlags[r][2];
    rows[r].report = aggregate_metrics(seeds, cell[r]);
  }
  return rows;
}

MetricsReport train_mlp_baseline(const HeteroGraph& g, const SplitSpec& split,
                                 const Config& cfg) {
  // Fixed reference architecture; it exists to be compared against, not
  // tuned: features -> 128 ReLU -> 2, Adam 1e-3 with 1e-3 weight decay,
  // 200 epochs, best-validation-loss weights.
  constexpr int kHidden = 128;
  constexpr int kEpochs = 200;
  constexpr double kLr = 1e-3;
  constexpr double kDecay = 1e-3;

  const int ut = g.user_type();
  const int n = g.node_counts[ut];
  const Tensor<double>& feats = g.features[ut];
  const std::vector<int>& labels = g.labels;
  if (labels.size() != static_cast<std::size_t>(n))
    throw Error("train: need one label per user");
  const std::vector<double> w_train =
      masked_weights(labels, split.train_ids, n, cfg.train.class_weighting);
  const bool have_valid = !split.valid_ids.empty();
  const std::vector<double> w_valid =
      masked_weights(labels, split.valid_ids, n, false);

  const std::vector<std::uint64_t>& seeds = cfg.train.seeds;
  if (seeds.empty()) throw Error("train: no seeds configured");
  std::vector<Metrics> per_seed(seeds.size());
  run_jobs(cfg.threads, seeds.size(), [&](std::size_t si) {
    const std::uint64_t seed = seeds[si];
    ParamStore<double> store;
    RngStream rng(seed, "mlp-params");
    store.add_glorot("mlp.w1", feats.cols(), kHidden, rng);
    store.add_zeros("mlp.b1", 1, kHidden);
    store.add_glorot("mlp.w2", kHidden, 2, rng);
    store.add_zeros("mlp.b2", 1, 2);

    const auto forward = [&](Tape<double>& tape,
                             const ParamLease<double>& lease) -> Var {
      const Var h = tape.relu(tape.add_bias(
          tape.matmul(tape.leaf(feats, false), lease["mlp.w1"]),
          lease["mlp.b1"]));
      return tape.add_bias(tape.matmul(h, lease["mlp.w2"]), lease["mlp.b2"]);
    };

    Adam<double> opt(kLr, 0.9, 0.999, 1e-8, kDecay);
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<Tensor<double>> best_params;
    bool have_best = false;
    for (int epoch = 0; epoch < kEpochs; ++epoch) {
      try {
        {
          Tape<double> tape;
          ParamLease<double> lease(tape, store);
          const Var loss =
              tape.softmax_xent(forward(tape, lease), labels, w_train);
          tape.backward(loss);
          opt.step(lease.grads());
        }
        if (have_valid) {
          Tape<double> tape;
          ParamLease<double> lease(tape, store);
          const Var loss =
              tape.softmax_xent(forward(tape, lease), labels, w_valid);
          const double v = tape.val(loss).at(0, 0);
          if (v < best_loss) {
            best_loss = v;
            best_params = snapshot_values(store);
            have_best = true;
          }
        }
      } catch (const Error& e) {
        throw Error("baseline aborted at epoch " + std::to_string(epoch) +
                    " (seed " + std::to_string(seed) + "): " + e.what());
      }
    }
    if (have_best) restore_values(store, best_params);

    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    const Tensor<double>& p = tape.val(tape.row_softmax(forward(tape, lease)));
    std::vector<double> s_test;
    std::vector<int> h_test, y_test;
    for (int id : split.test_ids) {
      s_test.push_back(p.at(id, 1));
      h_test.push_back(p.at(id, 1) > p.at(id, 0) ? 1 : 0);
      y_test.push_back(labels[id]);
    }
    per_seed[si] = evaluate(s_test, h_test, y_test);
  });
  return aggregate_metrics(seeds, per_seed);
}

void export_embeddings(const Tensor<double>& emb,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& ids,
                       const std::string& path) {
  const int n = emb.rows();
  if (labels.size() != static_cast<std::size_t>(n) ||
      ids.size() != static_cast<std::size_t>(n))
    throw Error("export_embeddings: row/label/id count mismatch");
  std::vector<std::string> header{"id", "label"};
  for (int j = 0; j < emb.cols(); ++j)
    header.push_back("e" + std::to_string(j));
  std::vector<std::vector<std::string>> rows;
  rows.reserve(n);
  char buf[40];
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> row{ids[i], std::to_string(labels[i])};
    for (int j = 0; j < emb.cols(); ++j) {
      // %.17g survives a parse round trip exactly.
      std::snprintf(buf, sizeof(buf), "%.17g", emb.at(i, j));
      row.emplace_back(buf);
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

GradCheckReport check_stage1_gradients(const HeteroGraph& g_in,
                                       const SplitSpec& split,
                                       const Config& cfg, std::uint64_t seed,
                                       std::size_t max_entries_per_tensor) {
  const TrainConfig& tc = cfg.train;
  if (!tc.use_macro && !tc.use_micro)
    throw Error("train: both aggregator branches disabled");
  HeteroGraph g = g_in;  // features are perturbed in place below
  const int ut = g.user_type();
  const int n = g.node_counts[ut];
  if (g.labels.size() != static_cast<std::size_t>(n))
    throw Error("train: need one label per user");

  std::vector<std::string> path_names;
  const std::vector<MetaPathSubgraph> subs =
      build_subgraphs(g, cfg.metapaths, &path_names);

  ParamStore<double> store;
  RngStream prng(seed, "stage1-params");
  add_stage1_params(store, g, path_names, cfg, prng);
  const std::vector<double> w_train =
      masked_weights(g.labels, split.train_ids, n, tc.class_weighting);

  // One closure builds the identical graph each call; topology and
  // parameters stay fixed, only the tensor entries under probe move.
  const auto loss_of =
      [&](std::map<std::string, Tensor<double>>* param_grads,
          std::vector<std::pair<int, Tensor<double>>>* feat_grads) -> double {
    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    std::vector<std::pair<int, Var>> leaves;
    const bool want = param_grads != nullptr;
    const Var h = stage1_embed(tape, lease, g, subs, cfg, &split.train_ids,
                               want, &leaves, nullptr, nullptr);
    const Var logits =
        tape.add_bias(tape.matmul(h, lease["probe.w"]), lease["probe.b"]);
    const Var loss = tape.softmax_xent(logits, g.labels, w_train);
    const double value = tape.val(loss).at(0, 0);
    if (want) {
      tape.backward(loss);
      for (const auto& [p, grad] : lease.grads()) (*param_grads)[p->name] = *grad;
      for (const auto& [t, var] : leaves)
        feat_grads->emplace_back(t, tape.grad(var));
    }
    return value;
  };

  std::map<std::string, Tensor<double>> param_grads;
  std::vector<std::pair<int, Tensor<double>>> feat_grads;
  loss_of(&param_grads, &feat_grads);

  RngStream pick(seed, "gradcheck-sample");
  const auto sample = [&](std::size_t size) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (size <= max_entries_per_tensor) return idx;
    for (std::size_t i = 0; i < max_entries_per_tensor; ++i) {
      const std::size_t j = i + pick.uniform_index(size - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(max_entries_per_tensor);
    return idx;
  };

  const double h_base = 1e-6;
  GradCheckReport rep;
  std::size_t input_slot = 0;
  const auto rel_err = [](double fd, double an) {
    return std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
  };
  const auto probe = [&](Tensor<double>& target,
                         const Tensor<double>& analytic) {
    for (std::size_t e : sample(target.size())) {
      const double saved = target.data()[e];
      const auto central = [&](double step) {
        target.data()[e] = saved + step;
        const double up = loss_of(nullptr, nullptr);
        target.data()[e] = saved - step;
        const double down = loss_of(nullptr, nullptr);
        target.data()[e] = saved;
        return (up - down) / (2.0 * step);
      };
      const double step = h_base * std::max(1.0, std::abs(saved));
      const double an = analytic.data()[e];
      double fd = central(step);
      double rel = rel_err(fd, an);
      if (rel >= 1e-5) {
        // A ReLU kink inside the stencil corrupts the quotient; shrinking
        // the step resolves that, while a wrong gradient stays wrong.
        const double fd2 = central(step / 16.0);
        const double rel2 = rel_err(fd2, an);
        if (rel2 < rel) {
          fd = fd2;
          rel = rel2;
        }
      }
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = input_slot;
        rep.worst_row = static_cast<int>(e) / target.cols();
        rep.worst_col = static_cast<int>(e) % target.cols();
        rep.analytic = an;
        rep.numeric = fd;
      }
    }
    ++input_slot;
  };

  for (Param<double>* p : store.all()) probe(p->value, param_grads.at(p->name));
  for (const auto& [t, grad] : feat_grads) probe(g.features[t], grad);
  return rep;
}

std::string format_report(const MetricsReport& report) {
  std::string out;
  const auto line = [&out](const std::string& tag, const std::string& a,
                           const std::string& p, const std::string& r,
                           const std::string& f, const std::string& u) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %9s %9s %9s %9s %9s\n",
                  tag.c_str(), a.c_str(), p.c_str(), r.c_str(), f.c_str(),
                  u.c_str());
    out += buf;
  };
  line("seed", "accuracy", "precision", "recall", "f1", "auc");
  for (std::size_t i = 0; i < report.per_seed.size(); ++i) {
    const Metrics& m = report.per_seed[i];
    line(std::to_string(report.seeds[i]), trim_zeros(m.accuracy),
         trim_zeros(m.precision), trim_zeros(m.recall), trim_zeros(m.f1),
         m.auc_defined ? trim_zeros(m.auc) : "-");
  }
  line("mean", trim_zeros(report.accuracy.mean),
       trim_zeros(report.precision.mean), trim_zeros(report.recall.mean),
       trim_zeros(report.f1.mean),
       report.auc_defined ? trim_zeros(report.auc.mean) : "-");
  line("std", trim_zeros(report.accuracy.stddev),
       trim_zeros(report.precision.stddev), trim_zeros(report.recall.stddev),
       trim_zeros(report.f1.stddev),
       report.auc_defined ? trim_zeros(report.auc.stddev) : "-");
  return out;
}

}  // namespace dietgraph
