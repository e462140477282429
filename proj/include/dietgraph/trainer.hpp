#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dietgraph/config.hpp"
#include "dietgraph/gradcheck.hpp"
#include "dietgraph/hetgraph.hpp"
#include "dietgraph/macro.hpp"
#include "dietgraph/metapath.hpp"
#include "dietgraph/metrics.hpp"
#include "dietgraph/micro.hpp"
#include "dietgraph/refine.hpp"
#include "dietgraph/tensor.hpp"

namespace dietgraph {

// Metapath attention at the end-of-training snapshot.
struct MacroAttentionExport {
  std::vector<std::string> path_names;
  std::vector<double> beta;                   // one weight per metapath
  std::vector<std::vector<EdgeScore>> alpha;  // per metapath, both directions
};

// Everything one seed's run produces. Loss traces and kept edges are part
// of the result on purpose: the no-leakage check compares them bit for bit
// across runs that only differ in valid/test labels.
struct PipelineResult {
  std::uint64_t seed = 0;

  std::vector<double> stage1_loss;  // one entry per epoch

  UnifiedGraph uni;
  RefinerReport refiner;  // empty trace when refinement is off
  RefinedGraph refined;   // passes the unified edges through when off
  double unified_homophily = 0.0;
  double kept_homophily = 0.0;
  double unified_homophily_test = 0.0;  // restricted to test users
  double kept_homophily_test = 0.0;

  std::vector<double> stage2_train_loss;
  std::vector<double> stage2_valid_loss;
  int best_epoch = -1;  // stage-2 epoch whose weights scored the metrics

  std::vector<double> scores;   // positive-class probability, every user
  std::vector<int> hard_labels; // argmax class, every user
  Metrics test_metrics;

  Tensor<double> fused;       // stage-1 embeddings fed to the refiner
  Tensor<double> embeddings;  // hidden layer of the final model, per user

  MacroAttentionExport macro_attn;     // empty when the branch is off
  std::vector<MicroEdge> micro_edges;  // likewise
  std::vector<double> micro_alpha;
};

// Two-stage training of the full model for one seed: metapath aggregation
// and one-hop attention fused and fitted through a temporary linear head
// on the training users, then edge refinement on the resulting embeddings,
// then the final graph model on the kept edges with best-validation-loss
// weight selection. Throws Error with stage and epoch context when a loss
// goes non-finite. Rejects configs with both aggregator branches off.
PipelineResult train_pipeline(const HeteroGraph& g, const SplitSpec& split,
                              const Config& cfg, std::uint64_t seed);

// Per-seed test metrics with mean and spread per metric. AUC aggregates
// over the seeds where it was defined.
struct MetricsReport {
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> per_seed;
  Aggregate accuracy;
  Aggregate precision;
  Aggregate recall;
  Aggregate f1;
  Aggregate auc;
  std::size_t auc_defined = 0;  // seeds contributing to the AUC aggregate
};

MetricsReport aggregate_metrics(const std::vector<std::uint64_t>& seeds,
                                const std::vector<Metrics>& per_seed);

// One pipeline run per seed in cfg.train.seeds, in listed order. Seeds are
// independent jobs; cfg.threads > 1 runs them in parallel with identical
// results.
std::vector<PipelineResult> run_seeds(const HeteroGraph& g,
                                      const SplitSpec& split,
                                      const Config& cfg);

struct AblationRow {
  bool use_macro = false;
  bool use_micro = false;
  bool use_refine = false;
  MetricsReport report;
};

// All six valid on/off combinations of the two aggregator branches and
// refinement (at least one branch on), each aggregated over the configured
// seeds. Row order is fixed: full model first, single knockouts, then the
// single-branch bare variants.
std::vector<AblationRow> run_ablation_grid(const HeteroGraph& g,
                                           const SplitSpec& split,
                                           const Config& cfg);

// Structure-blind reference model: a one-hidden-layer network on the raw
// user features, trained with the same split discipline and seed handling
// as the pipeline.
MetricsReport train_mlp_baseline(const HeteroGraph& g, const SplitSpec& split,
                                 const Config& cfg);

// CSV with one row per user: id, label, then every embedding coordinate at
// full precision, so a re-import reproduces the matrix exactly.
void export_embeddings(const Tensor<double>& emb,
                       const std::vector<int>& labels,
                       const std::vector<std::string>& ids,
                       const std::string& path);

// Central-difference check of the whole stage-1 forward plus its loss:
// every parameter tensor and every leafed feature tensor is probed against
// the reverse-mode gradients, subsampled beyond max_entries_per_tensor.
// Relative error uses |fd - an| / max(1, |fd|, |an|).
GradCheckReport check_stage1_gradients(const HeteroGraph& g,
                                       const SplitSpec& split,
                                       const Config& cfg, std::uint64_t seed,
                                       std::size_t max_entries_per_tensor);

// Formatted per-seed metrics table with the aggregate row, for stdout.
std::string format_report(const MetricsReport& report);

}  // namespace dietgraph
