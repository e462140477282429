#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dietgraph/csv.hpp"
#include "dietgraph/hetgraph.hpp"
#include "dietgraph/rng.hpp"
#include "json.hpp"

namespace dietgraph {

namespace {

using nlohmann::json;

double parse_double(const std::string& s, const std::string& where) {
  const char* b = s.data();
  const char* e = b + s.size();
  double out = 0;
  const auto res = std::from_chars(b, e, out);
  if (res.ec != std::errc() || res.ptr != e || !std::isfinite(out))
    throw Error(where + ": non-numeric value \"" + s + "\"");
  return out;
}

std::string edge_file_default(const Relation& r) {
  return r.src_type + "_" + r.name + "_" + r.dst_type + ".csv";
}

json features_to_json(const Tensor<double>& t) {
  json rows = json::array();
  for (int i = 0; i < t.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

int HeteroGraph::type_index(const std::string& name) const {
  for (std::size_t i = 0; i < node_types.size(); ++i)
    if (node_types[i] == name) return static_cast<int>(i);
  throw Error("unknown node type \"" + name + "\"");
}

bool HeteroGraph::has_relation(const std::string& name) const {
  for (const auto& r : relations)
    if (r.name == name) return true;
  return false;
}

const Relation& HeteroGraph::relation(const std::string& name) const {
  const Relation* found = nullptr;
  for (const auto& r : relations) {
    if (r.name == name) {
      if (found) throw Error("relation name \"" + name + "\" is ambiguous");
      found = &r;
    }
  }
  if (!found) throw Error("unknown relation \"" + name + "\"");
  return *found;
}

void HeteroGraph::validate() const {
  const std::size_t nt = node_types.size();
  if (node_counts.size() != nt || features.size() != nt ||
      id_names.size() != nt)
    throw Error("graph: per-type arrays disagree on type count");
  for (std::size_t t = 0; t < nt; ++t) {
    if (features[t].rows() != node_counts[t])
      throw Error("graph: feature rows mismatch for type " + node_types[t]);
    if (static_cast<int>(id_names[t].size()) != node_counts[t])
      throw Error("graph: id name count mismatch for type " + node_types[t]);
  }
  if (node_types.size() + relations.size() <= 2)
    throw Error("graph: needs more than two node and relation kinds in total");
  const int ut = user_type();
  if (static_cast<int>(labels.size()) != node_counts[ut])
    throw Error("graph: labels must cover exactly the user nodes");
  for (int l : labels)
    if (l != 0 && l != 1) throw Error("graph: labels must be 0 or 1");

  for (const auto& r : relations) {
    const int sc = node_counts[type_index(r.src_type)];
    const int dc = node_counts[type_index(r.dst_type)];
    if (r.offsets.size() != static_cast<std::size_t>(sc) + 1 ||
        r.rev_offsets.size() != static_cast<std::size_t>(dc) + 1)
      throw Error("graph: CSR offsets mismatch in relation " + r.name);
    if (r.offsets.back() != r.nbrs.size() ||
        r.rev_offsets.back() != r.rev_nbrs.size())
      throw Error("graph: CSR length mismatch in relation " + r.name);
    std::vector<std::pair<int, int>> fwd, rev;
    for (int s = 0; s < sc; ++s) {
      for (std::size_t p = r.offsets[s]; p < r.offsets[s + 1]; ++p) {
        const int d = r.nbrs[p];
        if (d < 0 || d >= dc)
          throw Error("graph: edge endpoint out of range in " + r.name);
        if (p > r.offsets[s] && r.nbrs[p - 1] >= d)
          throw Error("graph: adjacency not sorted/unique in " + r.name);
        fwd.push_back({s, d});
      }
    }
    for (int d = 0; d < dc; ++d) {
      for (std::size_t p = r.rev_offsets[d]; p < r.rev_offsets[d + 1]; ++p) {
        const int s = r.rev_nbrs[p];
        if (s < 0 || s >= sc)
          throw Error("graph: reverse endpoint out of range in " + r.name);
        rev.push_back({s, d});
      }
    }
    std::sort(rev.begin(), rev.end());
    if (fwd != rev)
      throw Error("graph: forward and reverse CSR disagree in " + r.name);
  }
}

bool HeteroGraph::operator==(const HeteroGraph& o) const {
  if (node_types != o.node_types || node_counts != o.node_counts ||
      id_names != o.id_names || labels != o.labels)
    return false;
  if (features.size() != o.features.size()) return false;
  for (std::size_t t = 0; t < features.size(); ++t) {
    if (features[t].rows() != o.features[t].rows() ||
        features[t].cols() != o.features[t].cols())
      return false;
    for (std::size_t i = 0; i < features[t].size(); ++i)
      if (features[t].data()[i] != o.features[t].data()[i]) return false;
  }
  if (relations.size() != o.relations.size()) return false;
  for (std::size_t i = 0; i < relations.size(); ++i) {
    const auto& a = relations[i];
    const auto& b = o.relations[i];
    if (a.src_type != b.src_type || a.name != b.name ||
        a.dst_type != b.dst_type || a.offsets != b.offsets ||
        a.nbrs != b.nbrs)
      return false;
  }
  return true;
}

Relation build_relation(const std::string& src_type, const std::string& name,
                        const std::string& dst_type, int src_count,
                        int dst_count, std::vector<std::pair<int, int>> edges) {
  for (const auto& [s, d] : edges) {
    if (s < 0 || s >= src_count || d < 0 || d >= dst_count)
      throw Error("relation " + name + ": edge endpoint out of range");
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  Relation r;
  r.src_type = src_type;
  r.name = name;
  r.dst_type = dst_type;
  r.offsets.assign(static_cast<std::size_t>(src_count) + 1, 0);
  for (const auto& [s, d] : edges) ++r.offsets[static_cast<std::size_t>(s) + 1];
  for (std::size_t i = 1; i < r.offsets.size(); ++i)
    r.offsets[i] += r.offsets[i - 1];
  r.nbrs.reserve(edges.size());
  for (const auto& [s, d] : edges) r.nbrs.push_back(d);

  r.rev_offsets.assign(static_cast<std::size_t>(dst_count) + 1, 0);
  for (const auto& [s, d] : edges)
    ++r.rev_offsets[static_cast<std::size_t>(d) + 1];
  for (std::size_t i = 1; i < r.rev_offsets.size(); ++i)
    r.rev_offsets[i] += r.rev_offsets[i - 1];
  r.rev_nbrs.resize(edges.size());
  std::vector<std::size_t> cursor(r.rev_offsets.begin(),
                                  r.rev_offsets.end() - 1);
  for (const auto& [s, d] : edges) r.rev_nbrs[cursor[d]++] = s;
  return r;
}

std::vector<HabitTag> bin_habits(const std::vector<double>& values,
                                 double low_pct, double high_pct) {
  if (values.empty()) throw Error("bin_habits: empty series");
  for (double v : values)
    if (!std::isfinite(v)) throw Error("bin_habits: non-finite value");
  if (low_pct <= 0.0 || high_pct <= 0.0 || low_pct + high_pct > 1.0)
    throw Error("bin_habits: percentiles must be positive and sum to at most 1");

  const int n = static_cast<int>(values.size());
  const int n_low = static_cast<int>(std::floor(n * low_pct));
  const int n_high = static_cast<int>(std::floor(n * high_pct));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  std::vector<HabitTag> tags(n, HabitTag::none);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  for (int i = 0; i < n_low; ++i) tags[order[i]] = HabitTag::low;

  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  int taken = 0;
  for (int i = 0; i < n && taken < n_high; ++i) {
    if (tags[order[i]] == HabitTag::low) continue;
    tags[order[i]] = HabitTag::high;
    ++taken;
  }
  return tags;
}

SplitSpec split_nodes(int n_users, const std::array<double, 3>& ratios,
                      std::uint64_t seed) {
  if (n_users < 3) throw Error("split_nodes: need at least 3 users");
  double sum = 0;
  for (double r : ratios) {
    if (r <= 0) throw Error("split_nodes: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error("split_nodes: ratios must sum to 1");

  std::vector<int> ids(n_users);
  for (int i = 0; i < n_users; ++i) ids[i] = i;
  RngStream rng(seed, "split");
  rng.shuffle(ids.data(), ids.size());

  const int n_train = static_cast<int>(std::floor(n_users * ratios[0]));
  const int n_valid = static_cast<int>(std::floor(n_users * ratios[1]));
  SplitSpec s;
  s.seed = seed;
  s.train_ids.assign(ids.begin(), ids.begin() + n_train);
  s.valid_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  s.test_ids.assign(ids.begin() + n_train + n_valid, ids.end());
  std::sort(s.train_ids.begin(), s.train_ids.end());
  std::sort(s.valid_ids.begin(), s.valid_ids.end());
  std::sort(s.test_ids.begin(), s.test_ids.end());
  return s;
}

HeteroGraph load_graph(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(manifest_path + ": cannot open file");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(manifest_path + ": invalid JSON: " + e.what());
  }
  if (!m.is_object() || !m.contains("nodes") || !m.contains("relations"))
    throw Error(manifest_path + ": manifest needs \"nodes\" and \"relations\"");

  const auto base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  HeteroGraph g;
  // user first, remaining types in sorted order.
  std::vector<std::string> names;
  for (const auto& [k, v] : m.at("nodes").items()) names.push_back(k);
  std::sort(names.begin(), names.end());
  auto it = std::find(names.begin(), names.end(), "user");
  if (it == names.end())
    throw Error(manifest_path + ": manifest has no user node file");
  names.erase(it);
  names.insert(names.begin(), "user");

  std::vector<std::map<std::string, int>> id_of(names.size());
  for (std::size_t t = 0; t < names.size(); ++t) {
    const std::string& type = names[t];
    const std::string path =
        resolve(m.at("nodes").at(type).get<std::string>());
    const CsvTable tab = read_csv(path);
    const int id_col = tab.column("id");
    if (id_col < 0) throw Error(path + ": missing id column");
    const int label_col = tab.column("label");
    if (type == "user" && label_col < 0)
      throw Error(path + ": user file must have a label column");
    if (type != "user" && label_col >= 0)
      throw Error(path + ": label column only belongs on the user file");
    const int emb_col = tab.column("embedding");

    // Feature columns: the embedding column if present, else every column
    // that is not id/label.
    std::vector<int> feat_cols;
    if (emb_col < 0) {
      for (std::size_t c = 0; c < tab.header.size(); ++c) {
        if (static_cast<int>(c) == id_col || static_cast<int>(c) == label_col)
          continue;
        feat_cols.push_back(static_cast<int>(c));
      }
    }

    const int n = static_cast<int>(tab.rows.size());
    std::vector<std::string> ids(n);
    std::vector<int> labels;
    std::vector<std::vector<double>> feats(n);
    int dim = -1;
    for (int i = 0; i < n; ++i) {
      const auto& row = tab.rows[i];
      const std::string where = path + ":" + std::to_string(tab.line_of[i]);
      ids[i] = row[id_col];
      if (!id_of[t].emplace(ids[i], i).second)
        throw Error(where + ": duplicate id \"" + ids[i] + "\"");
      if (label_col >= 0) {
        const double l = parse_double(row[label_col], where);
        if (l != 0.0 && l != 1.0)
          throw Error(where + ": label must be 0 or 1");
        labels.push_back(static_cast<int>(l));
      }
      if (emb_col >= 0) {
        json arr;
        try {
          arr = json::parse(row[emb_col]);
        } catch (const json::exception&) {
          throw Error(where + ": embedding is not a JSON array");
        }
        if (!arr.is_array())
          throw Error(where + ": embedding is not a JSON array");
        for (const auto& x : arr) {
          if (!x.is_number())
            throw Error(where + ": non-numeric value in embedding");
          feats[i].push_back(x.get<double>());
        }
      } else {
        for (int c : feat_cols)
          feats[i].push_back(parse_double(row[c], where));
      }
      if (dim < 0) dim = static_cast<int>(feats[i].size());
      if (static_cast<int>(feats[i].size()) != dim)
        throw Error(where + ": feature length differs from first row");
    }

    Tensor<double> f(n, dim < 0 ? 0 : dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < f.cols(); ++j) f.at(i, j) = feats[i][j];
    g.node_types.push_back(type);
    g.node_counts.push_back(n);
    g.features.push_back(std::move(f));
    g.id_names.push_back(std::move(ids));
    if (type == "user") g.labels = std::move(labels);
  }

  for (const auto& rel : m.at("relations")) {
    const std::string src = rel.at("src").get<std::string>();
    const std::string name = rel.at("name").get<std::string>();
    const std::string dst = rel.at("dst").get<std::string>();
    const std::string path = resolve(rel.at("file").get<std::string>());
    const int st = g.type_index(src);
    const int dt = g.type_index(dst);
    const CsvTable tab = read_csv(path);
    const int sc = tab.column("src_id");
    const int dc = tab.column("dst_id");
    if (sc < 0 || dc < 0)
      throw Error(path + ": edge file needs src_id and dst_id columns");
    std::vector<std::pair<int, int>> edges;
    edges.reserve(tab.rows.size());
    for (std::size_t i = 0; i < tab.rows.size(); ++i) {
      const std::string where =
          path + ":" + std::to_string(tab.line_of[i]);
      const auto si = id_of[st].find(tab.rows[i][sc]);
      if (si == id_of[st].end())
        throw Error(where + ": unknown " + src + " id \"" + tab.rows[i][sc] +
                    "\"");
      const auto di = id_of[dt].find(tab.rows[i][dc]);
      if (di == id_of[dt].end())
        throw Error(where + ": unknown " + dst + " id \"" + tab.rows[i][dc] +
                    "\"");
      edges.push_back({si->second, di->second});
    }
    g.relations.push_back(build_relation(src, name, dst, g.node_counts[st],
                                         g.node_counts[dt],
                                         std::move(edges)));
  }

  g.validate();
  return g;
}

void save_dataset(const HeteroGraph& g, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  json manifest;
  manifest["version"] = 1;
  const int ut = g.user_type();
  for (std::size_t t = 0; t < g.node_types.size(); ++t) {
    const std::string fname = g.node_types[t] + ".csv";
    std::vector<std::string> header = {"id"};
    if (static_cast<int>(t) == ut) header.push_back("label");
    header.push_back("embedding");
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < g.node_counts[t]; ++i) {
      std::vector<std::string> row = {g.id_names[t][i]};
      if (static_cast<int>(t) == ut)
        row.push_back(std::to_string(g.labels[i]));
      json emb = json::array();
      for (int j = 0; j < g.features[t].cols(); ++j)
        emb.push_back(g.features[t].at(i, j));
      row.push_back(emb.dump());
      rows.push_back(std::move(row));
    }
    write_csv((base / fname).string(), header, rows);
    manifest["nodes"][g.node_types[t]] = fname;
  }
  manifest["relations"] = json::array();
  for (const auto& r : g.relations) {
    const std::string fname = edge_file_default(r);
    const int st = g.type_index(r.src_type);
    const int dt = g.type_index(r.dst_type);
    std::vector<std::vector<std::string>> rows;
    for (int s = 0; s < g.node_counts[st]; ++s) {
      for (std::size_t p = r.offsets[s]; p < r.offsets[s + 1]; ++p) {
        rows.push_back({g.id_names[st][s], g.id_names[dt][r.nbrs[p]]});
      }
    }
    write_csv((base / fname).string(), {"src_id", "dst_id"}, rows);
    manifest["relations"].push_back(
        {{"src", r.src_type}, {"name", r.name}, {"dst", r.dst_type},
         {"file", fname}});
  }
  std::ofstream out(base / "manifest.json", std::ios::binary);
  if (!out) throw Error(dir + ": cannot write manifest.json");
  out << manifest.dump(1) << '\n';
}

void save_graph(const HeteroGraph& g, const std::string& path) {
  json j;
  j["format"] = "dietgraph-hetgraph";
  j["version"] = 1;
  j["types"] = json::array();
  for (std::size_t t = 0; t < g.node_types.size(); ++t) {
    j["types"].push_back({{"name", g.node_types[t]},
                          {"count", g.node_counts[t]},
                          {"dim", g.features[t].cols()},
                          {"ids", g.id_names[t]},
                          {"features", features_to_json(g.features[t])}});
  }
  j["labels"] = g.labels;
  j["relations"] = json::array();
  for (const auto& r : g.relations) {
    json edges = json::array();
    const int st = g.type_index(r.src_type);
    for (int s = 0; s < g.node_counts[st]; ++s)
      for (std::size_t p = r.offsets[s]; p < r.offsets[s + 1]; ++p)
        edges.push_back({s, r.nbrs[p]});
    j["relations"].push_back({{"src", r.src_type},
                              {"name", r.name},
                              {"dst", r.dst_type},
                              {"edges", std::move(edges)}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out << j.dump(1) << '\n';
  if (!out) throw Error(path + ": write failed");
}

HeteroGraph load_saved_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  if (j.value("format", "") != "dietgraph-hetgraph")
    throw Error(path + ": not a saved graph container");
  if (j.value("version", 0) != 1)
    throw Error(path + ": unsupported container version");

  HeteroGraph g;
  for (const auto& t : j.at("types")) {
    const int n = t.at("count").get<int>();
    const int dim = t.at("dim").get<int>();
    Tensor<double> f(n, dim);
    const auto& rows = t.at("features");
    if (static_cast<int>(rows.size()) != n)
      throw Error(path + ": feature row count mismatch");
    for (int i = 0; i < n; ++i)
      for (int jx = 0; jx < dim; ++jx)
        f.at(i, jx) = rows[i][jx].get<double>();
    g.node_types.push_back(t.at("name").get<std::string>());
    g.node_counts.push_back(n);
    g.features.push_back(std::move(f));
    g.id_names.push_back(t.at("ids").get<std::vector<std::string>>());
  }
  g.labels = j.at("labels").get<std::vector<int>>();
  for (const auto& r : j.at("relations")) {
    const std::string src = r.at("src").get<std::string>();
    const std::string dst = r.at("dst").get<std::string>();
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : r.at("edges"))
      edges.push_back({e[0].get<int>(), e[1].get<int>()});
    g.relations.push_back(build_relation(
        src, r.at("name").get<std::string>(), dst,
        g.node_counts[g.type_index(src)], g.node_counts[g.type_index(dst)],
        std::move(edges)));
  }
  g.validate();
  return g;
}

}  // namespace dietgraph
