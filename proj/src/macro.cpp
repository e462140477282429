#include "dietgraph/macro.hpp"

#include <cmath>
#include <string>

#include "dietgraph/error.hpp"

namespace dietgraph {

namespace {

// Directed adjacency of an undirected subgraph, grouped by attending node.
// Isolated nodes carry a single marked self edge so that the softmax and
// aggregation cover every user without a special case: a singleton segment
// yields alpha = 1 and the message reduces to the node's own projection.
struct DirectedAdj {
  std::vector<int> offsets;  // n + 1
  std::vector<int> att;
  std::vector<int> nbr;
  std::vector<char> self;
  std::vector<double> inv_deg;
};

DirectedAdj build_adj(const MetaPathSubgraph& sub) {
  const int n = sub.n_users;
  std::vector<int> deg(n, 0);
  for (const auto& e : sub.edges) {
    ++deg[e[0]];
    ++deg[e[1]];
  }
  DirectedAdj adj;
  adj.offsets.assign(n + 1, 0);
  for (int i = 0; i < n; ++i)
    adj.offsets[i + 1] = adj.offsets[i] + (deg[i] > 0 ? deg[i] : 1);
  const int total = adj.offsets[n];
  adj.att.resize(total);
  adj.nbr.resize(total);
  adj.self.assign(total, 0);
  adj.inv_deg.resize(n);
  std::vector<int> cursor(adj.offsets.begin(), adj.offsets.end() - 1);
  for (const auto& e : sub.edges) {
    adj.att[cursor[e[0]]] = e[0];
    adj.nbr[cursor[e[0]]++] = e[1];
    adj.att[cursor[e[1]]] = e[1];
    adj.nbr[cursor[e[1]]++] = e[0];
  }
  for (int i = 0; i < n; ++i) {
    if (deg[i] == 0) {
      adj.att[cursor[i]] = i;
      adj.nbr[cursor[i]] = i;
      adj.self[cursor[i]] = 1;
    }
    adj.inv_deg[i] = 1.0 / (deg[i] > 0 ? deg[i] : 1);
  }
  return adj;
}

}  // namespace

void add_macro_params(ParamStore<double>& store, int d_in,
                      const std::vector<std::string>& metapath_names,
                      const MacroConfig& cfg, RngStream& rng) {
  if (metapath_names.empty()) throw Error("macro: no metapaths configured");
  const int h = cfg.hidden_dim;
  if (cfg.shared_projection) {
    store.add_glorot("macro.w.shared", d_in, h, rng);
  } else {
    for (const auto& name : metapath_names)
      store.add_glorot("macro.w." + name, d_in, h, rng);
  }
  for (const auto& name : metapath_names)
    store.add_glorot("macro.a." + name, 2 * h, 1, rng);
  store.add_glorot("macro.sem.w", h, h, rng);
  store.add_zeros("macro.sem.b", 1, h);
  store.add_glorot("macro.sem.q", h, 1, rng);
}

MacroResult macro_forward(Tape<double>& tape, const ParamLease<double>& params,
                          const std::vector<MetaPathSubgraph>& subs,
                          Var user_feats, const MacroConfig& cfg,
                          const std::vector<int>* visible_rows) {
  if (subs.empty()) throw Error("macro: no metapath subgraphs");
  const int n = tape.val(user_feats).rows();
  for (const auto& sub : subs)
    if (sub.n_users != n)
      throw Error("macro: subgraph " + sub.name + " has " +
                  std::to_string(sub.n_users) + " users, features have " +
                  std::to_string(n));
  const int hidden = cfg.hidden_dim;
  const int heads = cfg.heads;
  const int dh = hidden / heads;

  MacroResult out;
  for (const auto& sub : subs) {
    const DirectedAdj adj = build_adj(sub);
    const Var w = params[cfg.shared_projection ? "macro.w.shared"
                                               : "macro.w." + sub.name];
    const Var a = params["macro.a." + sub.name];
    const Var z = tape.matmul(user_feats, w);

    std::vector<Var> head_out;
    std::vector<std::vector<double>> head_alpha;
    for (int h = 0; h < heads; ++h) {
      const Var zh = tape.slice_cols(z, h * dh, (h + 1) * dh);
      Var alpha;
      if (cfg.uniform_attention) {
        // Fixed-weight variant: every neighbor counts 1/|N(i)|.
        Tensor<double> flat(adj.offsets.back(), 1);
        for (int i = 0; i < n; ++i)
          for (int p = adj.offsets[i]; p < adj.offsets[i + 1]; ++p)
            flat.at(p, 0) = adj.inv_deg[i];
        alpha = tape.constant(std::move(flat));
      } else {
        const Var a1 = tape.slice_rows(a, h * dh, (h + 1) * dh);
        const Var a2 = tape.slice_rows(a, hidden + h * dh,
                                       hidden + (h + 1) * dh);
        const Var s1 = tape.matmul(zh, a1);
        const Var s2 = tape.matmul(zh, a2);
        const Var logits = tape.leaky_relu(
            tape.add(tape.gather_rows(s1, adj.att),
                     tape.gather_rows(s2, adj.nbr)),
            cfg.leaky_slope);
        alpha = tape.segment_softmax(logits, adj.offsets);
      }
      const Var agg =
          tape.segment_weighted_sum(alpha, zh, adj.nbr, adj.offsets);
      head_out.push_back(tape.elu(agg));
      const Tensor<double>& av = tape.val(alpha);
      std::vector<double> ha(av.rows());
      for (int e = 0; e < av.rows(); ++e) ha[e] = av.at(e, 0);
      head_alpha.push_back(std::move(ha));
    }
    Var hm = head_out[0];
    for (int h = 1; h < heads; ++h) hm = tape.concat_cols(hm, head_out[h]);
    out.per_path.push_back(hm);

    std::vector<EdgeScore> scores;
    for (std::size_t e = 0; e < adj.att.size(); ++e) {
      if (adj.self[e]) continue;
      double s = 0.0;
      for (int h = 0; h < heads; ++h) s += head_alpha[h][e];
      scores.push_back({adj.att[e], adj.nbr[e], s / heads});
    }
    out.alpha.push_back(std::move(scores));
  }

  // Metapath importance: mean tanh-projected score over visible users,
  // softmaxed across metapaths.
  const Var ws = params["macro.sem.w"];
  const Var bs = params["macro.sem.b"];
  const Var q = params["macro.sem.q"];
  Var score_row;
  for (std::size_t m = 0; m < subs.size(); ++m) {
    const Var s = tape.tanh_(tape.add_bias(tape.matmul(out.per_path[m], ws), bs));
    Var node_scores = tape.matmul(s, q);
    double denom = n;
    if (visible_rows) {
      if (visible_rows->empty()) throw Error("macro: empty visible set");
      node_scores = tape.gather_rows(node_scores, *visible_rows);
      denom = static_cast<double>(visible_rows->size());
    }
    const Var mean = tape.scalar_scale(tape.sum_all(node_scores), 1.0 / denom);
    score_row = m == 0 ? mean : tape.concat_cols(score_row, mean);
  }
  out.beta = tape.row_softmax(score_row);

  Var combined;
  for (std::size_t m = 0; m < subs.size(); ++m) {
    const Var weighted = tape.scalar_mul(
        tape.slice_cols(out.beta, static_cast<int>(m),
                        static_cast<int>(m) + 1),
        out.per_path[m]);
    combined = m == 0 ? weighted : tape.add(combined, weighted);
  }
  out.fused = tape.elu(combined);
  return out;
}

}  // namespace dietgraph
