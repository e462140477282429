#include "dietgraph/refine.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "dietgraph/error.hpp"

namespace dietgraph {

void add_fuse_params(ParamStore<double>& store, int d_in, int d_fused,
                     RngStream& rng) {
  store.add_glorot("fuse.w", d_in, d_fused, rng);
  store.add_zeros("fuse.b", 1, d_fused);
}

Var fuse_embeddings(Tape<double>& tape, const ParamLease<double>& params,
                    Var a, Var b) {
  const Var cat = tape.concat_cols(a, b);
  return tape.relu(
      tape.add_bias(tape.matmul(cat, params["fuse.w"]), params["fuse.b"]));
}

std::vector<EdgeTarget> build_refine_trainset(const UnifiedGraph& uni,
                                              const SplitSpec& split,
                                              const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != uni.n_users)
    throw Error("refine: labels do not cover the unified graph");
  std::vector<char> in_train(uni.n_users, 0);
  for (int id : split.train_ids) in_train[id] = 1;
  std::vector<EdgeTarget> out;
  for (const auto& [i, j] : uni.edges) {
    if (!in_train[i] || !in_train[j]) continue;
    out.push_back({i, j, labels[i] == labels[j] ? 1.0 : 0.0});
  }
  if (out.empty())
    throw Error("refine: no unified edges join two training users");
  return out;
}

void add_refiner_params(ParamStore<double>& store, int d, int hidden,
                        RngStream& rng) {
  store.add_glorot("refine.w1", 2 * d, hidden, rng);
  store.add_zeros("refine.b1", 1, hidden);
  store.add_glorot("refine.w2", hidden, 1, rng);
  store.add_zeros("refine.b2", 1, 1);
}

namespace {

Var refiner_one_order(Tape<double>& tape, const ParamLease<double>& params,
                      Var h, const std::vector<int>& a,
                      const std::vector<int>& b) {
  const Var cat =
      tape.concat_cols(tape.gather_rows(h, a), tape.gather_rows(h, b));
  const Var hid = tape.relu(
      tape.add_bias(tape.matmul(cat, params["refine.w1"]), params["refine.b1"]));
  return tape.sigmoid(
      tape.add_bias(tape.matmul(hid, params["refine.w2"]), params["refine.b2"]));
}

}  // namespace

Var refiner_scores(Tape<double>& tape, const ParamLease<double>& params,
                   Var h, const std::vector<int>& idx_i,
                   const std::vector<int>& idx_j) {
  const Var fwd = refiner_one_order(tape, params, h, idx_i, idx_j);
  const Var rev = refiner_one_order(tape, params, h, idx_j, idx_i);
  return tape.scalar_scale(tape.add(fwd, rev), 0.5);
}

RefinerReport train_refiner(ParamStore<double>& store,
                            const Tensor<double>& h,
                            const std::vector<EdgeTarget>& trainset,
                            const RefineConfig& cfg) {
  if (trainset.empty()) throw Error("refine: empty trainset");
  std::vector<int> ia, ib;
  std::vector<double> targets;
  for (const auto& e : trainset) {
    ia.push_back(e.i);
    ib.push_back(e.j);
    targets.push_back(e.target);
  }
  const std::size_t n = trainset.size();
  std::size_t positives = 0;
  for (double t : targets) positives += t > 0.5;

  RefinerReport report;
  report.single_class = positives == 0 || positives == n;
  std::vector<double> weights(n, 1.0);
  if (cfg.class_weighting && !report.single_class) {
    const double wp = static_cast<double>(n) / (2.0 * positives);
    const double wn = static_cast<double>(n) / (2.0 * (n - positives));
    for (std::size_t e = 0; e < n; ++e)
      weights[e] = targets[e] > 0.5 ? wp : wn;
  }

  Adam<double> opt(cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape<double> tape;
    ParamLease<double> lease(tape, store);
    const Var hv = tape.leaf(h, false);
    const Var probs = refiner_scores(tape, lease, hv, ia, ib);
    const Var loss = tape.bce(probs, targets, weights);
    report.loss_trace.push_back(tape.val(loss).at(0, 0));
    tape.backward(loss);
    opt.step(lease.grads());
  }

  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  const Var probs =
      refiner_scores(tape, lease, tape.leaf(h, false), ia, ib);
  std::size_t correct = 0;
  for (std::size_t e = 0; e < n; ++e) {
    const double p = tape.val(probs).at(static_cast<int>(e), 0);
    correct += (p >= 0.5) == (targets[e] > 0.5);
  }
  report.train_accuracy = static_cast<double>(correct) / n;
  return report;
}

RefinedGraph score_and_filter(ParamStore<double>& store,
                              const Tensor<double>& h,
                              const UnifiedGraph& uni, double threshold) {
  RefinedGraph out;
  out.n_users = uni.n_users;
  if (uni.edges.empty()) return out;
  std::vector<int> ia, ib;
  for (const auto& [i, j] : uni.edges) {
    ia.push_back(i);
    ib.push_back(j);
  }
  Tape<double> tape;
  ParamLease<double> lease(tape, store);
  const Var probs = refiner_scores(tape, lease, tape.leaf(h, false), ia, ib);
  for (std::size_t e = 0; e < uni.edges.size(); ++e) {
    const double score = tape.val(probs).at(static_cast<int>(e), 0);
    out.all_scores.push_back(score);
    if (score >= threshold) {
      out.edges.push_back(uni.edges[e]);
      out.scores.push_back(score);
    }
  }
  return out;
}

double edge_homophily(const std::vector<std::pair<int, int>>& edges,
                      const std::vector<int>& labels,
                      const std::vector<int>* within) {
  std::set<int> keep;
  if (within) keep.insert(within->begin(), within->end());
  long same = 0, total = 0;
  for (const auto& [i, j] : edges) {
    if (within && (!keep.count(i) || !keep.count(j))) continue;
    same += labels[i] == labels[j];
    ++total;
  }
  return total == 0 ? 0.0 : static_cast<double>(same) / total;
}

Csr<double> norm_adjacency(int n,
                           const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw Error("refine: adjacency edge endpoint out of range");
    if (i == j) continue;  // the self loop is added below exactly once
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    std::sort(adj[i].begin(), adj[i].end());
    adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size() + 1));
  }
  Csr<double> m;
  m.rows = n;
  m.cols = n;
  m.offsets.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    // Row holds self loop + neighbors in ascending column order.
    std::vector<int> cols = adj[i];
    cols.insert(std::lower_bound(cols.begin(), cols.end(), i), i);
    for (int c : cols) {
      m.col_idx.push_back(c);
      m.vals.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[c]);
    }
    m.offsets[i + 1] = static_cast<std::size_t>(m.col_idx.size());
  }
  return m;
}

void add_final_params(ParamStore<double>& store, int d, int hidden,
                      RngStream& rng) {
  store.add_glorot("gcn.w", d, hidden, rng);
  store.add_zeros("gcn.b", 1, hidden);
  store.add_glorot("head.w", hidden, 2, rng);
  store.add_zeros("head.b", 1, 2);
}

Var final_hidden(Tape<double>& tape, const ParamLease<double>& params, Var h,
                 const Csr<double>& adj) {
  return tape.relu(tape.add_bias(
      tape.spmm(adj, tape.matmul(h, params["gcn.w"])), params["gcn.b"]));
}

Var final_forward(Tape<double>& tape, const ParamLease<double>& params,
                  Var h, const Csr<double>& adj, double dropout_rate,
                  RngStream& rng, bool training) {
  const Var conv = final_hidden(tape, params, h, adj);
  const Var dropped = tape.dropout(conv, dropout_rate, rng, training);
  return tape.add_bias(tape.matmul(dropped, params["head.w"]),
                       params["head.b"]);
}

}  // namespace dietgraph
