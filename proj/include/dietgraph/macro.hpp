#pragma once

#include <vector>

#include "dietgraph/autograd.hpp"
#include "dietgraph/config.hpp"
#include "dietgraph/metapath.hpp"
#include "dietgraph/optim.hpp"

namespace dietgraph {

// One directed attention weight: node i attending to neighbor j.
struct EdgeScore {
  int i = 0;
  int j = 0;
  double score = 0.0;
};

struct MacroResult {
  Var fused;                  // N x hidden, combination across metapaths
  Var beta;                   // 1 x M metapath weights, sums to 1
  std::vector<Var> per_path;  // N x hidden per metapath
  // Head-averaged attention per metapath, both directions of every kept
  // edge; self-projection entries of isolated users are omitted.
  std::vector<std::vector<EdgeScore>> alpha;
};

// Registers projection, attention, and semantic parameters. Names:
// macro.w.<path> (or macro.w.shared), macro.a.<path>, macro.sem.{w,b,q}.
void add_macro_params(ParamStore<double>& store, int d_in,
                      const std::vector<std::string>& metapath_names,
                      const MacroConfig& cfg, RngStream& rng);

// Per-metapath attention aggregation over the filtered user-user subgraphs
// followed by semantic weighting across metapaths. Isolated users fall back
// to a self-projection through the same path. visible_rows restricts the
// semantic score average (the transductive protocol averages over training
// users while fitting); null averages over everyone.
MacroResult macro_forward(Tape<double>& tape, const ParamLease<double>& params,
                          const std::vector<MetaPathSubgraph>& subs,
                          Var user_feats, const MacroConfig& cfg,
                          const std::vector<int>* visible_rows = nullptr);

}  // namespace dietgraph
