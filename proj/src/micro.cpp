#include "dietgraph/micro.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dietgraph/error.hpp"

namespace dietgraph {

namespace {

struct EdgeRow {
  int att_global;
  int nbr_global;
  MicroEdge key;
  int batch_pos;  // row in the batched logit stack
};

}  // namespace

void add_micro_params(ParamStore<double>& store, const HeteroGraph& g,
                      const MicroConfig& cfg, RngStream& rng) {
  for (std::size_t t = 0; t < g.node_types.size(); ++t)
    store.add_glorot("micro.wt." + g.node_types[t], g.features[t].cols(),
                     cfg.dim, rng);
  for (const auto& r : g.relations)
    store.add_glorot("micro.wr." + r.name, cfg.dim, cfg.dim, rng);
}

MicroResult micro_forward(Tape<double>& tape, const ParamLease<double>& params,
                          const HeteroGraph& g, const std::vector<Var>& x,
                          const MicroConfig& cfg) {
  const int n_types = static_cast<int>(g.node_types.size());
  if (static_cast<int>(x.size()) != n_types)
    throw Error("micro: feature list does not match type count");
  const int d = cfg.dim;
  const int heads = cfg.heads;
  const int dh = d / heads;

  std::vector<int> type_off(n_types + 1, 0);
  for (int t = 0; t < n_types; ++t)
    type_off[t + 1] = type_off[t] + g.node_counts[t];
  const int n_all = type_off[n_types];

  // Projected features per type, then one stacked matrix in global order
  // for message gathering.
  std::vector<Var> z(n_types);
  for (int t = 0; t < n_types; ++t) {
    if (tape.val(x[t]).rows() != g.node_counts[t])
      throw Error("micro: features for " + g.node_types[t] +
                  " have the wrong row count");
    z[t] = tape.matmul(x[t], params["micro.wt." + g.node_types[t]]);
  }
  const Var z_all = tape.concat_rows(z);

  // Edge table: every relation in both directions, then self edges for
  // nodes with no neighbors at all. batch_pos tracks the row each edge
  // will occupy in the stacked logit vector.
  std::vector<EdgeRow> rows;
  std::vector<int> degree(n_all, 0);
  int batch_pos = 0;
  const int n_rel = static_cast<int>(g.relations.size());
  for (int dir = 0; dir < 2; ++dir) {
    for (int r = 0; r < n_rel; ++r) {
      const Relation& rel = g.relations[r];
      const int st = g.type_index(rel.src_type);
      const int dt = g.type_index(rel.dst_type);
      if (dir == 0) {
        for (int s = 0; s < g.node_counts[st]; ++s)
          for (std::size_t p = rel.offsets[s]; p < rel.offsets[s + 1]; ++p) {
            const int dnode = rel.nbrs[p];
            rows.push_back({type_off[st] + s, type_off[dt] + dnode,
                            {st, s, dt, dnode, r}, batch_pos++});
          }
      } else {
        for (int dst = 0; dst < g.node_counts[dt]; ++dst)
          for (std::size_t p = rel.rev_offsets[dst];
               p < rel.rev_offsets[dst + 1]; ++p) {
            const int snode = rel.rev_nbrs[p];
            rows.push_back({type_off[dt] + dst, type_off[st] + snode,
                            {dt, dst, st, snode, r}, batch_pos++});
          }
      }
    }
  }
  for (const auto& row : rows) ++degree[row.att_global];
  for (int t = 0; t < n_types; ++t)
    for (int i = 0; i < g.node_counts[t]; ++i) {
      const int gid = type_off[t] + i;
      if (degree[gid] == 0)
        rows.push_back({gid, gid, {t, i, t, i, -1}, batch_pos++});
    }

  std::sort(rows.begin(), rows.end(), [](const EdgeRow& a, const EdgeRow& b) {
    if (a.att_global != b.att_global) return a.att_global < b.att_global;
    return a.batch_pos < b.batch_pos;
  });
  const int n_edges = static_cast<int>(rows.size());
  std::vector<int> offsets(n_all + 1, 0);
  {
    int e = 0;
    for (int gid = 0; gid < n_all; ++gid) {
      offsets[gid] = e;
      while (e < n_edges && rows[e].att_global == gid) ++e;
    }
    offsets[n_all] = e;
  }
  std::vector<int> perm(n_edges), nbr_sorted(n_edges);
  for (int e = 0; e < n_edges; ++e) {
    perm[e] = rows[e].batch_pos;
    nbr_sorted[e] = rows[e].nbr_global;
  }
  std::vector<double> inv_deg(n_all);
  for (int gid = 0; gid < n_all; ++gid)
    inv_deg[gid] = 1.0 / std::max(degree[gid], 1);

  // Per-head attention and aggregation. Logits are built relation by
  // relation (bilinear score through the relation's transform), stacked in
  // batch order, then permuted into attending-node segments.
  MicroResult out;
  std::vector<Var> head_out;
  std::vector<Var> head_alpha;
  for (int h = 0; h < heads; ++h) {
    std::vector<Var> zt(n_types);
    for (int t = 0; t < n_types; ++t)
      zt[t] = tape.slice_cols(z[t], h * dh, (h + 1) * dh);

    std::vector<Var> pieces;
    for (int dir = 0; dir < 2; ++dir) {
      for (int r = 0; r < n_rel; ++r) {
        const Relation& rel = g.relations[r];
        if (rel.edge_count() == 0) continue;
        const int st = g.type_index(rel.src_type);
        const int dt = g.type_index(rel.dst_type);
        const Var wt = params["micro.wr." + rel.name];  // transposed
        const Var w_block =
            tape.slice_rows(tape.slice_cols(wt, h * dh, (h + 1) * dh),
                            h * dh, (h + 1) * dh);
        std::vector<int> ia, ib;
        if (dir == 0) {
          for (int s = 0; s < g.node_counts[st]; ++s)
            for (std::size_t p = rel.offsets[s]; p < rel.offsets[s + 1]; ++p) {
              ia.push_back(s);
              ib.push_back(rel.nbrs[p]);
            }
          // score = z_att . (W z_nbr); the stored transform is W^T so the
          // neighbor side is a plain row-times-matrix product.
          const Var p = tape.matmul(zt[dt], w_block);
          pieces.push_back(tape.pair_dot(zt[st], p, ia, ib));
        } else {
          for (int dst = 0; dst < g.node_counts[dt]; ++dst)
            for (std::size_t p = rel.rev_offsets[dst];
                 p < rel.rev_offsets[dst + 1]; ++p) {
              ia.push_back(dst);
              ib.push_back(rel.rev_nbrs[p]);
            }
          const Var p = tape.matmul(zt[st], w_block);
          pieces.push_back(tape.pair_dot(zt[dt], p, ia, ib));
        }
      }
    }
    for (int t = 0; t < n_types; ++t) {
      std::vector<int> self_ids;
      for (int i = 0; i < g.node_counts[t]; ++i)
        if (degree[type_off[t] + i] == 0) self_ids.push_back(i);
      if (!self_ids.empty())
        pieces.push_back(tape.pair_dot(zt[t], zt[t], self_ids, self_ids));
    }

    const Var logits_batch = tape.scalar_scale(
        pieces.size() == 1 ? pieces[0] : tape.concat_rows(pieces),
        1.0 / std::sqrt(static_cast<double>(d)));
    const Var logits = tape.gather_rows(logits_batch, perm);
    const Var alpha = tape.segment_softmax(logits, offsets);
    const Var z_all_h = tape.slice_cols(z_all, h * dh, (h + 1) * dh);
    Var agg = tape.segment_weighted_sum(alpha, z_all_h, nbr_sorted, offsets);
    if (cfg.mean_norm) agg = tape.row_scale(agg, inv_deg);
    head_out.push_back(tape.elu(agg));
    head_alpha.push_back(alpha);
  }

  Var h_all = head_out[0];
  for (int h = 1; h < heads; ++h) h_all = tape.concat_cols(h_all, head_out[h]);
  out.h_by_type.resize(n_types);
  for (int t = 0; t < n_types; ++t)
    out.h_by_type[t] = tape.slice_rows(h_all, type_off[t], type_off[t + 1]);

  out.edges.reserve(rows.size());
  out.alpha.reserve(rows.size());
  for (int e = 0; e < n_edges; ++e) {
    out.edges.push_back(rows[e].key);
    double s = 0.0;
    for (int h = 0; h < heads; ++h) s += tape.val(head_alpha[h]).at(e, 0);
    out.alpha.push_back(s / heads);
  }
  return out;
}

namespace {

// Score-descending order; equal scores rank by ascending id so exports are
// stable across platforms.
bool ranks_before(const AttentionItem& a, const AttentionItem& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.type != b.type) return a.type < b.type;
  if (a.node != b.node) return a.node < b.node;
  return a.relation < b.relation;
}

int type_or_minus_one(const HeteroGraph& g, const std::string& name) {
  for (std::size_t i = 0; i < g.node_types.size(); ++i)
    if (g.node_types[i] == name) return static_cast<int>(i);
  return -1;
}

}  // namespace

AttentionRecord export_user_attention(const HeteroGraph& g,
                                      const std::vector<MicroEdge>& edges,
                                      const std::vector<double>& alpha,
                                      int user, int top_k) {
  if (edges.size() != alpha.size())
    throw Error("export_user_attention: edge/score length mismatch");
  if (top_k < 0) throw Error("export_user_attention: negative top_k");
  const int ut = g.user_type();
  if (user < 0 || user >= g.node_counts[ut])
    throw Error("export_user_attention: user " + std::to_string(user) +
                " outside graph");
  const int food_t = type_or_minus_one(g, "food");
  const int habit_t = type_or_minus_one(g, "habit");
  const int ingredient_t = type_or_minus_one(g, "ingredient");

  AttentionRecord rec;
  rec.user = user;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const MicroEdge& me = edges[e];
    if (me.att_type != ut || me.att_node != user) continue;
    rec.neighbors.push_back(
        {me.nbr_node, me.nbr_type, me.relation, alpha[e]});
  }
  std::sort(rec.neighbors.begin(), rec.neighbors.end(), ranks_before);
  for (const AttentionItem& it : rec.neighbors) {
    if (it.type == food_t &&
        rec.top_foods.size() < static_cast<std::size_t>(top_k))
      rec.top_foods.push_back(it);
    else if (it.type == habit_t &&
             rec.top_habits.size() < static_cast<std::size_t>(top_k))
      rec.top_habits.push_back(it);
  }

  // Ingredient rankings come from the food node's own attention row.
  for (const AttentionItem& f : rec.top_foods) {
    FoodIngredients fi;
    fi.food = f.node;
    if (ingredient_t >= 0) {
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const MicroEdge& me = edges[e];
        if (me.att_type != food_t || me.att_node != f.node) continue;
        if (me.nbr_type != ingredient_t) continue;
        fi.ingredients.push_back(
            {me.nbr_node, me.nbr_type, me.relation, alpha[e]});
      }
      std::sort(fi.ingredients.begin(), fi.ingredients.end(), ranks_before);
    }
    rec.food_details.push_back(std::move(fi));
  }
  return rec;
}

}  // namespace dietgraph
