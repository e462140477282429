#pragma once

#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/config.hpp"
#include "dietgraph/hetgraph.hpp"
#include "dietgraph/optim.hpp"

namespace dietgraph {

// One-hop attention edge in aggregation order. relation -1 marks the
// self-projection fallback of a node with no neighbors.
struct MicroEdge {
  int att_type = 0;
  int att_node = 0;
  int nbr_type = 0;
  int nbr_node = 0;
  int relation = -1;
};

struct MicroResult {
  std::vector<Var> h_by_type;    // n_t x dim per node type
  std::vector<MicroEdge> edges;  // grouped by attending node
  std::vector<double> alpha;     // head-averaged weight per edge
};

// Registers micro.wt.<type> (type dim -> dim) and micro.wr.<relation>
// (dim x dim, held transposed so scoring needs no transpose op).
void add_micro_params(ParamStore<double>& store, const HeteroGraph& g,
                      const MicroConfig& cfg, RngStream& rng);

// Heterogeneous one-hop attention over every node of every type. Each node
// attends across all incident relations in both directions with
// type-specific input transforms and relation-specific bilinear scoring.
// The aggregation stacks a 1/|N(i)| mean factor on top of the attention
// softmax on purpose; cfg.mean_norm=false drops the mean factor.
MicroResult micro_forward(Tape<double>& tape, const ParamLease<double>& params,
                          const HeteroGraph& g, const std::vector<Var>& x,
                          const MicroConfig& cfg);

// One ranked neighbor in an attention export. relation -1 marks the
// self-projection fallback of a neighborless node.
struct AttentionItem {
  int node = 0;
  int type = 0;
  int relation = -1;
  double score = 0.0;
};

struct FoodIngredients {
  int food = 0;
  std::vector<AttentionItem> ingredients;  // that food's incoming scores
};

// Full picture of where one user's attention went: every neighbor in
// descending score order (the scores sum to 1 across the list), the
// leading foods and habits cut to the export width, and for each leading
// food the ranking of its own ingredient attention.
struct AttentionRecord {
  int user = 0;
  std::vector<AttentionItem> neighbors;
  std::vector<AttentionItem> top_foods;
  std::vector<AttentionItem> top_habits;
  std::vector<FoodIngredients> food_details;  // aligned with top_foods
};

// Builds the record for one user from a micro_forward export. Equal scores
// rank by ascending node id. Node types named "food", "habit" and
// "ingredient" feed the typed sub-lists; a graph missing one of them just
// leaves that sub-list empty.
AttentionRecord export_user_attention(const HeteroGraph& g,
                                      const std::vector<MicroEdge>& edges,
                                      const std::vector<double>& alpha,
                                      int user, int top_k = 10);

}  // namespace dietgraph
