#include <algorithm>
#include <cctype>

#include "dietgraph/metapath.hpp"

namespace dietgraph {

MetaPath metapath_from_name(const HeteroGraph& g, const std::string& name) {
  // U<x>U names walk out and back over the user relation whose destination
  // type starts with <x>.
  if (name.size() != 3 || name.front() != 'U' || name.back() != 'U')
    throw Error("unknown meta-path \"" + name + "\"");
  const char want = static_cast<char>(std::tolower(name[1]));
  std::string via;
  for (const auto& r : g.relations) {
    if (r.src_type != "user" || r.dst_type.empty()) continue;
    if (r.dst_type.front() != want) continue;
    if (!via.empty())
      throw Error("meta-path \"" + name + "\" is ambiguous on this schema");
    via = r.name;
  }
  if (via.empty())
    throw Error("meta-path \"" + name + "\" matches no relation");
  return MetaPath{name, via};
}

PathCounts count_paths(const HeteroGraph& g, const MetaPath& mp) {
  const Relation& r = g.relation(mp.via_relation);
  if (r.src_type != "user")
    throw Error("meta-path must start at the user type");
  const int n_users = g.node_counts[g.type_index("user")];

  PathCounts out;
  out.n_users = n_users;
  // Row intersection with a dense scratch row: for user i the count against
  // j is the number of shared middle nodes, accumulated over i's neighbors.
  std::vector<int> scratch(n_users, 0);
  std::vector<int> touched;
  for (int i = 0; i < n_users; ++i) {
    touched.clear();
    for (std::size_t p = r.offsets[i]; p < r.offsets[i + 1]; ++p) {
      const int x = r.nbrs[p];
      for (std::size_t q = r.rev_offsets[x]; q < r.rev_offsets[x + 1]; ++q) {
        const int j = r.rev_nbrs[q];
        if (j <= i) continue;  // emit each unordered pair once, no self-paths
        if (scratch[j]++ == 0) touched.push_back(j);
      }
    }
    std::sort(touched.begin(), touched.end());
    for (int j : touched) {
      out.entries.push_back({i, j, scratch[j]});
      scratch[j] = 0;
    }
  }
  return out;
}

MetaPathSubgraph extract_subgraph(const PathCounts& counts, int k,
                                  const std::string& name) {
  if (k < 1) throw Error("extract_subgraph: k must be at least 1");
  MetaPathSubgraph s;
  s.name = name;
  s.n_users = counts.n_users;
  s.k = k;
  for (const auto& e : counts.entries)
    if (e[2] >= k) s.edges.push_back(e);
  return s;
}

UnifiedGraph union_graphs(const std::vector<MetaPathSubgraph>& subgraphs) {
  if (subgraphs.empty()) throw Error("union_graphs: no subgraphs");
  if (subgraphs.size() > 32)
    throw Error("union_graphs: provenance mask holds at most 32 sources");
  UnifiedGraph u;
  u.n_users = subgraphs[0].n_users;
  for (const auto& s : subgraphs) {
    if (s.n_users != u.n_users)
      throw Error("union_graphs: subgraphs disagree on user count");
    u.sources.push_back(s.name);
  }
  std::vector<std::pair<std::pair<int, int>, unsigned>> tagged;
  for (std::size_t s = 0; s < subgraphs.size(); ++s)
    for (const auto& e : subgraphs[s].edges)
      tagged.push_back({{e[0], e[1]}, 1u << s});
  std::sort(tagged.begin(), tagged.end());
  for (const auto& [edge, bit] : tagged) {
    if (!u.edges.empty() && u.edges.back() == edge) {
      u.provenance.back() |= bit;
    } else {
      u.edges.push_back(edge);
      u.provenance.push_back(bit);
    }
  }
  return u;
}

}  // namespace dietgraph
