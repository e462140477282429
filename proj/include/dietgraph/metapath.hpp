#pragma once

#include <array>
#include <string>
#include <vector>

#include "dietgraph/hetgraph.hpp"

namespace dietgraph {

// Two-step user-X-user walk: out along one relation and back along its
// reverse.
struct MetaPath {
  std::string name;
  std::string via_relation;
};

// Resolves a declared name (UFU, UHU) against the graph schema.
MetaPath metapath_from_name(const HeteroGraph& g, const std::string& name);

// Sparse symmetric path counts. Entries are {i, j, count} with i < j, sorted
// ascending; the diagonal is excluded.
struct PathCounts {
  int n_users = 0;
  std::vector<std::array<int, 3>> entries;
};

PathCounts count_paths(const HeteroGraph& g, const MetaPath& mp);

// Connectivity-filtered user graph: edges are the pairs whose path count
// reached k. All users stay present as nodes.
struct MetaPathSubgraph {
  std::string name;
  int n_users = 0;
  int k = 1;
  std::vector<std::array<int, 3>> edges;  // {i, j, count}, i < j, sorted
};

MetaPathSubgraph extract_subgraph(const PathCounts& counts, int k,
                                  const std::string& name);

// Deduplicated union of subgraph edge sets. provenance[e] is a bitmask over
// sources (bit s = subgraph s contributed edge e).
struct UnifiedGraph {
  int n_users = 0;
  std::vector<std::pair<int, int>> edges;  // i < j, sorted
  std::vector<unsigned> provenance;
  std::vector<std::string> sources;
};

UnifiedGraph union_graphs(const std::vector<MetaPathSubgraph>& subgraphs);

}  // namespace dietgraph
