#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dietgraph/hetgraph.hpp"

namespace dietgraph {

struct MetaPathSpec {
  std::string name;
  int k = 1;
};

struct MacroConfig {
  int hidden_dim = 64;
  int heads = 4;
  double leaky_slope = 0.2;
  // One projection per metapath by default; true reuses a single matrix.
  bool shared_projection = false;
  // Replaces learned attention with uniform 1/|N(i)| weights.
  bool uniform_attention = false;
};

struct MicroConfig {
  int dim = 256;
  int heads = 4;
  // The aggregation divides by |N(i)| on top of the attention softmax.
  // false drops the extra mean factor for comparison runs.
  bool mean_norm = true;
};

struct RefineConfig {
  int hidden_dim = 64;
  double threshold = 0.5;
  int epochs = 100;
  double lr = 0.001;
  double weight_decay = 0.0;
  // Reweights the edge-reliability loss by inverse target frequency.
  // No non-edge negatives are sampled either way; the loss runs over
  // train-train edges of the unified graph only.
  bool class_weighting = false;
};

struct TrainConfig {
  int stage1_epochs = 100;
  double stage1_lr = 0.001;
  double stage1_weight_decay = 0.001;
  int stage2_epochs = 500;
  double stage2_lr = 0.0001;
  double stage2_weight_decay = 0.001;
  double dropout = 0.6;
  int fused_dim = 256;
  int final_hidden = 128;
  bool class_weighting = false;
  bool use_macro = true;
  bool use_micro = true;
  bool use_refine = true;
  std::vector<std::uint64_t> seeds{1};
};

struct StatsConfig {
  double low_pct = 0.1;
  double high_pct = 0.1;
  bool continuity_correction = false;
  std::vector<std::string> stopwords{"a",  "an", "and", "in",  "of",
                                     "on", "or", "the", "with"};
};

struct ExplainConfig {
  int top_k = 10;
  std::string endpoint;  // empty = render prompts only, no dispatch
  std::string token_env = "DIETGRAPH_TOKEN";
  int retries = 3;
};

// Every knob of the pipeline in one place. A config file may set any
// subset; the rest keep these defaults. Unknown keys are rejected at every
// nesting level.
struct Config {
  int threads = 1;
  std::string kernels = "auto";  // scalar | avx2 | auto
  SyntheticConfig synthetic;
  std::vector<MetaPathSpec> metapaths{{"UFU", 2}, {"UHU", 1}};
  MacroConfig macro;
  MicroConfig micro;
  RefineConfig refine;
  TrainConfig train;
  StatsConfig stats;
  ExplainConfig explain;
};

// Overlays the JSON file onto defaults. Throws Error on unknown keys,
// wrong types, or unreadable file.
Config load_config(const std::string& path);

// Applies one key=value override with a dotted path, e.g.
// "train.stage1_lr=0.01" or "metapaths=[{\"name\":\"UFU\",\"k\":2}]".
// The value parses as JSON, falling back to a literal string.
void apply_override(Config& cfg, const std::string& assignment);

// Full round-trippable JSON form (all keys, current values).
std::string config_to_json(const Config& cfg);

// Replaces every seed in the config with one master seed.
void reseed(Config& cfg, std::uint64_t seed);

}  // namespace dietgraph
