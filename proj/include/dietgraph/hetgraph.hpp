#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dietgraph/tensor.hpp"

namespace dietgraph {

// One typed relation with both traversal directions. Neighbor lists are
// sorted ascending and deduplicated; forward and reverse CSR always describe
// the same edge set.
struct Relation {
  std::string src_type;
  std::string name;
  std::string dst_type;
  std::vector<std::size_t> offsets;      // per src node
  std::vector<int> nbrs;
  std::vector<std::size_t> rev_offsets;  // per dst node
  std::vector<int> rev_nbrs;

  std::size_t edge_count() const { return nbrs.size(); }
};

// Typed heterogeneous graph. Node ids are dense per-type indices; the
// original string ids are kept for reporting. Immutable after construction.
struct HeteroGraph {
  std::vector<std::string> node_types;
  std::vector<int> node_counts;
  std::vector<Tensor<double>> features;            // per type
  std::vector<std::vector<std::string>> id_names;  // per type
  std::vector<int> labels;                         // user nodes, 0/1
  std::vector<Relation> relations;

  int type_index(const std::string& name) const;
  int user_type() const { return type_index("user"); }
  // Relation by name; name must be unique among relations.
  const Relation& relation(const std::string& name) const;
  bool has_relation(const std::string& name) const;

  // Checks every stored invariant: endpoint ranges, heterogeneity
  // (|types| + |relations| > 2), label coverage and values, forward/reverse
  // CSR agreement. Throws Error on the first violation.
  void validate() const;

  bool operator==(const HeteroGraph& o) const;
};

// Builds sorted/deduplicated CSR in both directions from an edge list.
Relation build_relation(const std::string& src_type, const std::string& name,
                        const std::string& dst_type, int src_count,
                        int dst_count,
                        std::vector<std::pair<int, int>> edges);

struct SplitSpec {
  std::vector<int> train_ids;
  std::vector<int> valid_ids;
  std::vector<int> test_ids;
  std::uint64_t seed = 0;
};

enum class HabitTag { low, none, high };

// Rank-based tagging: exactly floor(n * low_pct) lowest values tagged low
// and floor(n * high_pct) highest tagged high. Ties resolve by stable sort
// on (value, id ascending); the high bucket never steals a low-tagged id.
std::vector<HabitTag> bin_habits(const std::vector<double>& values,
                                 double low_pct, double high_pct);

// Shuffle-based disjoint exhaustive split; id lists come back sorted.
SplitSpec split_nodes(int n_users, const std::array<double, 3>& ratios,
                      std::uint64_t seed);

struct SyntheticConfig {
  // Scale defaults mirror the NHANES dietary graph this models.
  int n_users = 4826;
  int n_foods = 5896;
  int n_habits = 54;
  int n_ingredients = 2792;
  int n_categories = 174;
  int user_dim = 64;
  int food_dim = 64;
  int habit_dim = 32;
  int ingredient_dim = 32;
  int category_dim = 16;
  // Fraction of foods/habits that are class-discriminative; split evenly
  // into one pool per class. Every user-food and user-habit edge targets a
  // pool: the user's own with probability 1 - noise_rate, the opposite
  // pool otherwise.
  double class_signal = 0.5;
  double noise_rate = 0.1;
  int deg_eat = 28;
  int deg_have = 10;
  int deg_contain = 3;
  int deg_belong = 1;
  double positive_frac = 0.5;
  // Class-conditional mean offset for discriminative node features.
  double feature_shift = 0.8;
  // Optional weak signal on user features themselves (0 = none).
  double user_feature_shift = 0.0;
  std::array<double, 3> split_ratios{0.2, 0.4, 0.4};
  std::uint64_t seed = 1;
};

// Which pool each food/habit belongs to: 0/1 per class, -1 for neutral
// nodes that receive no user edges.
struct SyntheticTruth {
  std::vector<int> food_class;
  std::vector<int> habit_class;
};

struct SyntheticData {
  HeteroGraph graph;
  SplitSpec split;
  SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Manifest-driven CSV ingestion. The manifest maps type names to node files
// and lists relations with their edge files; paths resolve relative to the
// manifest's directory.
HeteroGraph load_graph(const std::string& manifest_path);

// Writes one CSV per node type and per relation plus manifest.json into
// dir. Inverse of load_graph.
void save_dataset(const HeteroGraph& g, const std::string& dir);

// Versioned single-file JSON container round-trip.
void save_graph(const HeteroGraph& g, const std::string& path);
HeteroGraph load_saved_graph(const std::string& path);

}  // namespace dietgraph
