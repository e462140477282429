#include "dietgraph/config.hpp"

#include <fstream>
#include <set>

#include "dietgraph/error.hpp"
#include "json.hpp"

namespace dietgraph {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw Error("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key))
      throw Error("config: unknown key \"" + where + key + "\"");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error("config: bad value for \"" + where + key + "\": " + e.what());
  }
}

void from_json_into(const json& j, SyntheticConfig& c,
                    const std::string& where) {
  check_keys(j,
             {"n_users", "n_foods", "n_habits", "n_ingredients",
              "n_categories", "user_dim", "food_dim", "habit_dim",
              "ingredient_dim", "category_dim", "class_signal", "noise_rate",
              "deg_eat", "deg_have", "deg_contain", "deg_belong",
              "positive_frac", "feature_shift", "user_feature_shift",
              "split_ratios", "seed"},
             where);
  get(j, "n_users", c.n_users, where);
  get(j, "n_foods", c.n_foods, where);
  get(j, "n_habits", c.n_habits, where);
  get(j, "n_ingredients", c.n_ingredients, where);
  get(j, "n_categories", c.n_categories, where);
  get(j, "user_dim", c.user_dim, where);
  get(j, "food_dim", c.food_dim, where);
  get(j, "habit_dim", c.habit_dim, where);
  get(j, "ingredient_dim", c.ingredient_dim, where);
  get(j, "category_dim", c.category_dim, where);
  get(j, "class_signal", c.class_signal, where);
  get(j, "noise_rate", c.noise_rate, where);
  get(j, "deg_eat", c.deg_eat, where);
  get(j, "deg_have", c.deg_have, where);
  get(j, "deg_contain", c.deg_contain, where);
  get(j, "deg_belong", c.deg_belong, where);
  get(j, "positive_frac", c.positive_frac, where);
  get(j, "feature_shift", c.feature_shift, where);
  get(j, "user_feature_shift", c.user_feature_shift, where);
  get(j, "split_ratios", c.split_ratios, where);
  get(j, "seed", c.seed, where);
}

void from_json_into(const json& j, MacroConfig& c, const std::string& where) {
  check_keys(j,
             {"hidden_dim", "heads", "leaky_slope", "shared_projection",
              "uniform_attention"},
             where);
  get(j, "hidden_dim", c.hidden_dim, where);
  get(j, "heads", c.heads, where);
  get(j, "leaky_slope", c.leaky_slope, where);
  get(j, "shared_projection", c.shared_projection, where);
  get(j, "uniform_attention", c.uniform_attention, where);
}

void from_json_into(const json& j, MicroConfig& c, const std::string& where) {
  check_keys(j, {"dim", "heads", "mean_norm"}, where);
  get(j, "dim", c.dim, where);
  get(j, "heads", c.heads, where);
  get(j, "mean_norm", c.mean_norm, where);
}

void from_json_into(const json& j, RefineConfig& c, const std::string& where) {
  check_keys(j,
             {"hidden_dim", "threshold", "epochs", "lr", "weight_decay",
              "class_weighting"},
             where);
  get(j, "hidden_dim", c.hidden_dim, where);
  get(j, "threshold", c.threshold, where);
  get(j, "epochs", c.epochs, where);
  get(j, "lr", c.lr, where);
  get(j, "weight_decay", c.weight_decay, where);
  get(j, "class_weighting", c.class_weighting, where);
}

void from_json_into(const json& j, TrainConfig& c, const std::string& where) {
  check_keys(j,
             {"stage1_epochs", "stage1_lr", "stage1_weight_decay",
              "stage2_epochs", "stage2_lr", "stage2_weight_decay", "dropout",
              "fused_dim", "final_hidden", "class_weighting", "use_macro",
              "use_micro", "use_refine", "seeds"},
             where);
  get(j, "stage1_epochs", c.stage1_epochs, where);
  get(j, "stage1_lr", c.stage1_lr, where);
  get(j, "stage1_weight_decay", c.stage1_weight_decay, where);
  get(j, "stage2_epochs", c.stage2_epochs, where);
  get(j, "stage2_lr", c.stage2_lr, where);
  get(j, "stage2_weight_decay", c.stage2_weight_decay, where);
  get(j, "dropout", c.dropout, where);
  get(j, "fused_dim", c.fused_dim, where);
  get(j, "final_hidden", c.final_hidden, where);
  get(j, "class_weighting", c.class_weighting, where);
  get(j, "use_macro", c.use_macro, where);
  get(j, "use_micro", c.use_micro, where);
  get(j, "use_refine", c.use_refine, where);
  get(j, "seeds", c.seeds, where);
}

void from_json_into(const json& j, StatsConfig& c, const std::string& where) {
  check_keys(j, {"low_pct", "high_pct", "continuity_correction", "stopwords"},
             where);
  get(j, "low_pct", c.low_pct, where);
  get(j, "high_pct", c.high_pct, where);
  get(j, "continuity_correction", c.continuity_correction, where);
  get(j, "stopwords", c.stopwords, where);
}

void from_json_into(const json& j, ExplainConfig& c, const std::string& where) {
  check_keys(j, {"top_k", "endpoint", "token_env", "retries"}, where);
  get(j, "top_k", c.top_k, where);
  get(j, "endpoint", c.endpoint, where);
  get(j, "token_env", c.token_env, where);
  get(j, "retries", c.retries, where);
}

void from_json_into(const json& j, Config& c) {
  check_keys(j,
             {"threads", "kernels", "synthetic", "metapaths", "macro",
              "micro", "refine", "train", "stats", "explain"},
             "");
  get(j, "threads", c.threads, "");
  get(j, "kernels", c.kernels, "");
  if (j.contains("synthetic"))
    from_json_into(j.at("synthetic"), c.synthetic, "synthetic.");
  if (j.contains("metapaths")) {
    const json& arr = j.at("metapaths");
    if (!arr.is_array()) throw Error("config: metapaths must be an array");
    c.metapaths.clear();
    for (const json& e : arr) {
      check_keys(e, {"name", "k"}, "metapaths[].");
      MetaPathSpec spec;
      get(e, "name", spec.name, "metapaths[].");
      get(e, "k", spec.k, "metapaths[].");
      if (spec.name.empty())
        throw Error("config: metapaths[].name must be set");
      if (spec.k < 1) throw Error("config: metapaths[].k must be positive");
      c.metapaths.push_back(std::move(spec));
    }
    if (c.metapaths.empty())
      throw Error("config: metapaths must not be empty");
  }
  if (j.contains("macro")) from_json_into(j.at("macro"), c.macro, "macro.");
  if (j.contains("micro")) from_json_into(j.at("micro"), c.micro, "micro.");
  if (j.contains("refine"))
    from_json_into(j.at("refine"), c.refine, "refine.");
  if (j.contains("train")) from_json_into(j.at("train"), c.train, "train.");
  if (j.contains("stats")) from_json_into(j.at("stats"), c.stats, "stats.");
  if (j.contains("explain"))
    from_json_into(j.at("explain"), c.explain, "explain.");

  if (c.threads < 1) throw Error("config: threads must be at least 1");
  if (c.kernels != "auto" && c.kernels != "scalar" && c.kernels != "avx2")
    throw Error("config: kernels must be auto, scalar, or avx2");
  if (!c.train.use_macro && !c.train.use_micro)
    throw Error("config: use_macro and use_micro cannot both be false");
  if (c.macro.hidden_dim % c.macro.heads != 0)
    throw Error("config: macro.hidden_dim must divide evenly into heads");
  if (c.micro.dim % c.micro.heads != 0)
    throw Error("config: micro.dim must divide evenly into heads");
  if (c.train.dropout < 0.0 || c.train.dropout >= 1.0)
    throw Error("config: train.dropout must lie in [0, 1)");
  if (c.train.seeds.empty())
    throw Error("config: train.seeds must not be empty");
}

json to_json(const Config& c) {
  json j;
  j["threads"] = c.threads;
  j["kernels"] = c.kernels;
  json& s = j["synthetic"];
  s["n_users"] = c.synthetic.n_users;
  s["n_foods"] = c.synthetic.n_foods;
  s["n_habits"] = c.synthetic.n_habits;
  s["n_ingredients"] = c.synthetic.n_ingredients;
  s["n_categories"] = c.synthetic.n_categories;
  s["user_dim"] = c.synthetic.user_dim;
  s["food_dim"] = c.synthetic.food_dim;
  s["habit_dim"] = c.synthetic.habit_dim;
  s["ingredient_dim"] = c.synthetic.ingredient_dim;
  s["category_dim"] = c.synthetic.category_dim;
  s["class_signal"] = c.synthetic.class_signal;
  s["noise_rate"] = c.synthetic.noise_rate;
  s["deg_eat"] = c.synthetic.deg_eat;
  s["deg_have"] = c.synthetic.deg_have;
  s["deg_contain"] = c.synthetic.deg_contain;
  s["deg_belong"] = c.synthetic.deg_belong;
  s["positive_frac"] = c.synthetic.positive_frac;
  s["feature_shift"] = c.synthetic.feature_shift;
  s["user_feature_shift"] = c.synthetic.user_feature_shift;
  s["split_ratios"] = c.synthetic.split_ratios;
  s["seed"] = c.synthetic.seed;
  j["metapaths"] = json::array();
  for (const auto& m : c.metapaths)
    j["metapaths"].push_back({{"name", m.name}, {"k", m.k}});
  j["macro"] = {{"hidden_dim", c.macro.hidden_dim},
                {"heads", c.macro.heads},
                {"leaky_slope", c.macro.leaky_slope},
                {"shared_projection", c.macro.shared_projection},
                {"uniform_attention", c.macro.uniform_attention}};
  j["micro"] = {{"dim", c.micro.dim},
                {"heads", c.micro.heads},
                {"mean_norm", c.micro.mean_norm}};
  j["refine"] = {{"hidden_dim", c.refine.hidden_dim},
                 {"threshold", c.refine.threshold},
                 {"epochs", c.refine.epochs},
                 {"lr", c.refine.lr},
                 {"weight_decay", c.refine.weight_decay},
                 {"class_weighting", c.refine.class_weighting}};
  j["train"] = {{"stage1_epochs", c.train.stage1_epochs},
                {"stage1_lr", c.train.stage1_lr},
                {"stage1_weight_decay", c.train.stage1_weight_decay},
                {"stage2_epochs", c.train.stage2_epochs},
                {"stage2_lr", c.train.stage2_lr},
                {"stage2_weight_decay", c.train.stage2_weight_decay},
                {"dropout", c.train.dropout},
                {"fused_dim", c.train.fused_dim},
                {"final_hidden", c.train.final_hidden},
                {"class_weighting", c.train.class_weighting},
                {"use_macro", c.train.use_macro},
                {"use_micro", c.train.use_micro},
                {"use_refine", c.train.use_refine},
                {"seeds", c.train.seeds}};
  j["stats"] = {{"low_pct", c.stats.low_pct},
                {"high_pct", c.stats.high_pct},
                {"continuity_correction", c.stats.continuity_correction},
                {"stopwords", c.stats.stopwords}};
  j["explain"] = {{"top_k", c.explain.top_k},
                  {"endpoint", c.explain.endpoint},
                  {"token_env", c.explain.token_env},
                  {"retries", c.explain.retries}};
  return j;
}

}  // namespace

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config: " + path + ": " + e.what());
  }
  Config cfg;
  from_json_into(j, cfg);
  return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error("config: override must look like key=value, got \"" +
                assignment + "\"");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // unquoted strings stay strings

  // Rebuild the nested shape of the assignment and overlay it onto the
  // full current state, so the same validation path sees the result.
  json patch = value;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw Error("config: empty key segment in \"" + path + "\"");
    patch = json{{*it, patch}};
  }

  json full = to_json(cfg);
  full.merge_patch(patch);
  Config next;
  from_json_into(full, next);
  cfg = next;
}

std::string config_to_json(const Config& cfg) { return to_json(cfg).dump(2); }

void reseed(Config& cfg, std::uint64_t seed) {
  cfg.synthetic.seed = seed;
  cfg.train.seeds = {seed};
}

}  // namespace dietgraph
