#pragma once

#include <utility>
#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/config.hpp"
#include "dietgraph/hetgraph.hpp"
#include "dietgraph/metapath.hpp"
#include "dietgraph/optim.hpp"
#include "dietgraph/sparse.hpp"

namespace dietgraph {

// fuse.w maps concatenated macro+micro rows to the fused width; fuse.b is
// its bias.
void add_fuse_params(ParamStore<double>& store, int d_in, int d_fused,
                     RngStream& rng);

// h_i = ReLU(W [a_i ; b_i] + bias) row by row.
Var fuse_embeddings(Tape<double>& tape, const ParamLease<double>& params,
                    Var a, Var b);

// One labeled edge for the reliability model: target 1 when both (train)
// endpoints carry the same label.
struct EdgeTarget {
  int i = 0;
  int j = 0;
  double target = 0.0;
};

// Unified-graph edges whose endpoints BOTH lie in split.train_ids; no
// other edge and no synthesized non-edge ever reaches the refiner, which
// is what keeps valid/test labels out of every gradient.
std::vector<EdgeTarget> build_refine_trainset(const UnifiedGraph& uni,
                                              const SplitSpec& split,
                                              const std::vector<int>& labels);

// Two-layer reliability scorer on concatenated endpoint embeddings:
// refine.w1/b1 (2*d -> hidden, ReLU), refine.w2/b2 (hidden -> 1, sigmoid).
void add_refiner_params(ParamStore<double>& store, int d, int hidden,
                        RngStream& rng);

// Probability per pair, symmetrized as the mean of both concatenation
// orders since edges are undirected.
Var refiner_scores(Tape<double>& tape, const ParamLease<double>& params,
                   Var h, const std::vector<int>& idx_i,
                   const std::vector<int>& idx_j);

struct RefinerReport {
  std::vector<double> loss_trace;
  double train_accuracy = 0.0;
  bool single_class = false;  // every target identical; trains anyway
};

// Full-batch Adam on binary cross-entropy over the trainset. h stays
// fixed; only refine.* parameters move.
RefinerReport train_refiner(ParamStore<double>& store,
                            const Tensor<double>& h,
                            const std::vector<EdgeTarget>& trainset,
                            const RefineConfig& cfg);

struct RefinedGraph {
  int n_users = 0;
  std::vector<std::pair<int, int>> edges;  // subset of the unified edges
  std::vector<double> scores;              // aligned with edges
  std::vector<double> all_scores;          // aligned with uni.edges
};

// Scores every unified edge and keeps those at or above the threshold.
// Nodes are never dropped.
RefinedGraph score_and_filter(ParamStore<double>& store,
                              const Tensor<double>& h,
                              const UnifiedGraph& uni, double threshold);

// Fraction of edges joining same-label endpoints, optionally restricted to
// edges whose endpoints both fall in `within` (pass nullptr for all).
double edge_homophily(const std::vector<std::pair<int, int>>& edges,
                      const std::vector<int>& labels,
                      const std::vector<int>* within = nullptr);

// Symmetrically normalized adjacency with self loops over user nodes.
Csr<double> norm_adjacency(int n, const std::vector<std::pair<int, int>>& edges);

// gcn.w/gcn.b (d -> hidden into one aggregation layer), head.w/head.b
// (hidden -> 2 classifier).
void add_final_params(ParamStore<double>& store, int d, int hidden,
                      RngStream& rng);

// The aggregation layer alone: ReLU(A (h W) + b). Exposed so callers can
// export the hidden representation the classifier head sees.
Var final_hidden(Tape<double>& tape, const ParamLease<double>& params, Var h,
                 const Csr<double>& adj);

// ReLU(A (h W) + b) with dropout before the classifier head; returns raw
// 2-class logits.
Var final_forward(Tape<double>& tape, const ParamLease<double>& params,
                  Var h, const Csr<double>& adj, double dropout_rate,
                  RngStream& rng, bool training);

}  // namespace dietgraph
