#pragma once

#include <algorithm>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "decorr/matrix.hpp"
#include "decorr/rng.hpp"

namespace decorr {

/// Undirected simple graph with node features and (possibly partial) labels.
/// The adjacency is symmetric, stores no self-loops and uses value 1.0 for
/// every edge.
struct Graph {
  int n = 0;
  SparseCSR adjacency;
  DenseMatrix features;      // n x d0
  std::vector<int> labels;   // class index or -1 for unlabeled
  int num_classes = 0;

  int feature_dim() const { return features.cols; }
};

struct Split {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

inline std::vector<std::pair<int, int>> undirected_edges(const Graph& g) {
  std::vector<std::pair<int, int>> out;
  const SparseCSR& a = g.adjacency;
  for (int i = 0; i < a.rows; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
      if (i < a.col_idx[k]) out.emplace_back(i, a.col_idx[k]);
  return out;
}

/// Build the symmetric 0/1 adjacency from undirected pairs; self-loops are
/// dropped and duplicates collapse to a single edge.
inline SparseCSR adjacency_from_pairs(int n, std::vector<std::pair<int, int>> pairs) {
  std::vector<std::pair<int, int>> canon;
  canon.reserve(pairs.size());
  for (auto [a, b] : pairs) {
    require(a >= 0 && a < n && b >= 0 && b < n, "edge index out of range");
    if (a == b) continue;
    canon.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(canon.size() * 2);
  for (auto [a, b] : canon) {
    trip.emplace_back(a, b, 1.0);
    trip.emplace_back(b, a, 1.0);
  }
  return SparseCSR::from_triplets(n, n, std::move(trip));
}

/// D^{-1/2} (A+I) D^{-1/2} with D_ii = 1 + degree(i). Isolated nodes map to
/// themselves with weight 1.
inline SparseCSR normalize_adjacency(const Graph& g) {
  const SparseCSR& a = g.adjacency;
  std::vector<double> inv_sqrt_deg(g.n);
  for (int i = 0; i < g.n; ++i) {
    double d = 1.0 + static_cast<double>(a.row_ptr[i + 1] - a.row_ptr[i]);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(a.values.size() + g.n);
  for (int i = 0; i < g.n; ++i) {
    trip.emplace_back(i, i, inv_sqrt_deg[i] * inv_sqrt_deg[i]);
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      int j = a.col_idx[k];
      trip.emplace_back(i, j, inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  }
  return SparseCSR::from_triplets(g.n, g.n, std::move(trip));
}

// ---------------------------------------------------------------------------
// GNNB v1 text format
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

inline int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("gnnb: bad integer for ") + what + ": '" + s + "'");
  }
}

}  // namespace detail

struct LoadedGraph {
  Graph graph;
  std::optional<Split> split;
};

inline LoadedGraph load_graph_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("gnnb: empty file");
  auto head = detail::split_ws(line);
  if (head.size() != 7 || head[0] != "#" || head[1] != "gnnb" || head[2] != "1")
    throw DataError("gnnb: bad header line: '" + line + "'");
  const int n = detail::parse_int(head[3], "n");
  const int m = detail::parse_int(head[4], "m");
  const int dim = detail::parse_int(head[5], "d0");
  const int c = detail::parse_int(head[6], "C");
  if (n < 0 || m < 0 || dim < 0 || c < 0)
    throw DataError("gnnb: negative counts in header");

  Graph g;
  g.n = n;
  g.num_classes = c;
  g.features = DenseMatrix(n, dim);
  g.labels.assign(n, -1);

  auto expect_section = [&](const std::string& name) {
    if (!std::getline(in, line)) throw DataError("gnnb: missing section '" + name + "'");
    auto toks = detail::split_ws(line);
    if (toks.empty() || toks[0] != "#" ||
        (toks.size() < 2 || toks[1] != name))
      throw DataError("gnnb: expected section '# " + name + "', got '" + line + "'");
    return toks;
  };

  expect_section("features");
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError("gnnb: truncated features section");
    auto toks = detail::split_ws(line);
    if (static_cast<int>(toks.size()) != dim)
      throw DataError("gnnb: feature count mismatch on row " + std::to_string(i));
    for (int j = 0; j < dim; ++j) g.features(i, j) = parse_double(toks[j]);
  }

  expect_section("labels");
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DataError("gnnb: truncated labels section");
    int y = detail::parse_int(detail::split_ws(line).at(0), "label");
    if (y < -1 || y >= c) throw DataError("gnnb: label out of range on row " + std::to_string(i));
    g.labels[i] = y;
  }

  expect_section("edges");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(m);
  for (int e = 0; e < m; ++e) {
    if (!std::getline(in, line)) throw DataError("gnnb: truncated edges section");
    auto toks = detail::split_ws(line);
    if (toks.size() != 2) throw DataError("gnnb: bad edge line: '" + line + "'");
    int a = detail::parse_int(toks[0], "edge src");
    int b = detail::parse_int(toks[1], "edge dst");
    if (a < 0 || a >= n || b < 0 || b >= n)
      throw DataError("gnnb: edge index out of range: '" + line + "'");
    pairs.emplace_back(a, b);
  }
  g.adjacency = adjacency_from_pairs(n, std::move(pairs));

  std::optional<Split> split;
  while (std::getline(in, line)) {
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] != "#" || toks.size() < 2 || toks[1] != "split")
      throw DataError("gnnb: unexpected trailing content: '" + line + "'");
    if (toks.size() != 3) throw DataError("gnnb: bad split header: '" + line + "'");
    if (!std::getline(in, line)) throw DataError("gnnb: truncated split section");
    std::vector<int> ids;
    for (const auto& t : detail::split_ws(line)) {
      int v = detail::parse_int(t, "split id");
      if (v < 0 || v >= n) throw DataError("gnnb: split index out of range");
      ids.push_back(v);
    }
    if (!split) split.emplace();
    if (toks[2] == "train")
      split->train = std::move(ids);
    else if (toks[2] == "val")
      split->val = std::move(ids);
    else if (toks[2] == "test")
      split->test = std::move(ids);
    else
      throw DataError("gnnb: unknown split part '" + toks[2] + "'");
  }
  return {std::move(g), std::move(split)};
}

inline LoadedGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file: " + path);
  return load_graph_stream(in);
}

inline void save_graph_stream(std::ostream& out, const Graph& g,
                              const Split* split = nullptr) {
  auto edges = undirected_edges(g);
  out << "# gnnb 1 " << g.n << ' ' << edges.size() << ' ' << g.feature_dim() << ' '
      << g.num_classes << '\n';
  out << "# features\n";
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.feature_dim(); ++j) {
      if (j) out << ' ';
      out << format_double(g.features(i, j));
    }
    out << '\n';
  }
  out << "# labels\n";
  for (int i = 0; i < g.n; ++i) out << g.labels[i] << '\n';
  out << "# edges\n";
  for (auto [a, b] : edges) out << a << ' ' << b << '\n';
  if (split) {
    const std::pair<const char*, const std::vector<int>*> parts[] = {
        {"train", &split->train}, {"val", &split->val}, {"test", &split->test}};
    for (auto [name, ids] : parts) {
      out << "# split " << name << '\n';
      for (std::size_t i = 0; i < ids->size(); ++i) {
        if (i) out << ' ';
        out << (*ids)[i];
      }
      out << '\n';
    }
  }
}

inline void save_graph(const std::string& path, const Graph& g,
                       const Split* split = nullptr) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write graph file: " + path);
  save_graph_stream(out, g, split);
}

// ---------------------------------------------------------------------------
// Splits and transformations
// ---------------------------------------------------------------------------

/// 20 labeled nodes per class for training, then 500 validation and 1000 test
/// nodes drawn uniformly from the remaining labeled nodes.
inline Split planetoid_split(const Graph& g, Rng& rng) {
  require(g.num_classes >= 1, "planetoid_split: graph has no classes");
  require(g.n >= 20 * g.num_classes + 1500, "planetoid_split: graph too small");
  std::vector<std::vector<int>> by_class(g.num_classes);
  for (int i = 0; i < g.n; ++i)
    if (g.labels[i] >= 0) by_class[g.labels[i]].push_back(i);

  Split s;
  std::vector<char> taken(g.n, 0);
  for (int c = 0; c < g.num_classes; ++c) {
    require(static_cast<int>(by_class[c].size()) >= 20,
            "planetoid_split: class " + std::to_string(c) + " has fewer than 20 labeled nodes");
    auto pick = rng.sample_without_replacement(static_cast<int>(by_class[c].size()), 20);
    for (int k : pick) {
      s.train.push_back(by_class[c][k]);
      taken[by_class[c][k]] = 1;
    }
  }
  std::sort(s.train.begin(), s.train.end());

  std::vector<int> pool;
  for (int i = 0; i < g.n; ++i)
    if (g.labels[i] >= 0 && !taken[i]) pool.push_back(i);
  require(static_cast<int>(pool.size()) >= 1500,
          "planetoid_split: fewer than 1500 labeled nodes left for val/test");
  auto vpick = rng.sample_without_replacement(static_cast<int>(pool.size()), 500);
  std::vector<char> in_val(pool.size(), 0);
  for (int k : vpick) {
    s.val.push_back(pool[k]);
    in_val[k] = 1;
  }
  std::vector<int> rest;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (!in_val[k]) rest.push_back(pool[k]);
  auto tpick = rng.sample_without_replacement(static_cast<int>(rest.size()), 1000);
  for (int k : tpick) s.test.push_back(rest[k]);
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Zero the feature rows of validation and test nodes; training rows are
/// untouched.
inline Graph apply_missing_features(const Graph& g, const Split& s) {
  Graph out = g;
  for (const auto* part : {&s.val, &s.test})
    for (int i : *part)
      for (int j = 0; j < out.feature_dim(); ++j) out.features(i, j) = 0.0;
  return out;
}

/// Independently retain each undirected edge with probability 1-rate; both
/// directions are kept or dropped together. Resampled on every call.
inline Graph drop_edge(const Graph& g, double rate, Rng& rng) {
  require(rate >= 0.0 && rate <= 1.0, "drop_edge: rate outside [0, 1]");
  std::vector<std::pair<int, int>> kept;
  for (auto e : undirected_edges(g))
    if (!(rng.uniform() < rate)) kept.push_back(e);
  Graph out = g;
  out.adjacency = adjacency_from_pairs(g.n, std::move(kept));
  return out;
}

/// Induced subgraph on the largest connected component; ties broken toward
/// the component containing the smallest original node index. Node ids are
/// compacted preserving original order.
inline Graph largest_connected_component(const Graph& g) {
  std::vector<int> comp(g.n, -1);
  int best_start = -1, best_size = 0;
  for (int s = 0; s < g.n; ++s) {
    if (comp[s] != -1) continue;
    int size = 0;
    std::deque<int> queue{s};
    comp[s] = s;
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      ++size;
      for (int k = g.adjacency.row_ptr[u]; k < g.adjacency.row_ptr[u + 1]; ++k) {
        int v = g.adjacency.col_idx[k];
        if (comp[v] == -1) {
          comp[v] = s;
          queue.push_back(v);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best_start = s;
    }
  }

  std::vector<int> keep;
  for (int i = 0; i < g.n; ++i)
    if (comp[i] == best_start) keep.push_back(i);
  std::vector<int> remap(g.n, -1);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = static_cast<int>(k);

  Graph out;
  out.n = static_cast<int>(keep.size());
  out.num_classes = g.num_classes;
  out.features = DenseMatrix(out.n, g.feature_dim());
  out.labels.resize(out.n);
  for (int k = 0; k < out.n; ++k) {
    out.labels[k] = g.labels[keep[k]];
    for (int j = 0; j < g.feature_dim(); ++j) out.features(k, j) = g.features(keep[k], j);
  }
  std::vector<std::pair<int, int>> pairs;
  for (auto [a, b] : undirected_edges(g))
    if (remap[a] != -1 && remap[b] != -1) pairs.emplace_back(remap[a], remap[b]);
  out.adjacency = adjacency_from_pairs(out.n, std::move(pairs));
  return out;
}

inline int component_count(const Graph& g) {
  std::vector<char> seen(g.n, 0);
  int count = 0;
  for (int s = 0; s < g.n; ++s) {
    if (seen[s]) continue;
    ++count;
    std::deque<int> queue{s};
    seen[s] = 1;
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int k = g.adjacency.row_ptr[u]; k < g.adjacency.row_ptr[u + 1]; ++k)
        if (!seen[g.adjacency.col_idx[k]]) {
          seen[g.adjacency.col_idx[k]] = 1;
          queue.push_back(g.adjacency.col_idx[k]);
        }
    }
  }
  return count;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

inline Graph erdos_renyi_graph(int n, double p, Rng& rng, int feature_dim = 0) {
  require(n >= 0, "erdos_renyi: negative node count");
  require(p >= 0.0 && p <= 1.0, "erdos_renyi: probability outside [0, 1]");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) pairs.emplace_back(i, j);
  Graph g;
  g.n = n;
  g.adjacency = adjacency_from_pairs(n, std::move(pairs));
  g.features = DenseMatrix(n, feature_dim);
  g.labels.assign(n, -1);
  g.num_classes = 0;
  return g;
}

struct SbmParams {
  std::vector<int> block_sizes;
  double p_in = 0.05;
  double p_out = 0.005;
  int feature_dim = 16;
  double separation = 2.0;  // distance of each class mean from the origin
};

/// Stochastic block model. Labels are block ids; features are the class mean
/// (separation * e_{c mod dim}) plus unit-variance Gaussian noise. The split
/// uses 20 nodes per class for training, then up to 500 validation and up to
/// 1000 test nodes from the remainder.
inline std::pair<Graph, Split> sbm_graph(const SbmParams& params, Rng& rng) {
  require(!params.block_sizes.empty(), "sbm: no blocks");
  require(params.p_in >= 0.0 && params.p_in <= 1.0 && params.p_out >= 0.0 &&
              params.p_out <= 1.0,
          "sbm: probability outside [0, 1]");
  require(params.feature_dim >= 1, "sbm: feature_dim must be >= 1");
  Graph g;
  g.num_classes = static_cast<int>(params.block_sizes.size());
  for (int b : params.block_sizes) {
    require(b >= 0, "sbm: negative block size");
    g.n += b;
  }
  g.labels.resize(g.n);
  {
    int i = 0;
    for (int c = 0; c < g.num_classes; ++c)
      for (int k = 0; k < params.block_sizes[c]; ++k) g.labels[i++] = c;
  }
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j) {
      double p = g.labels[i] == g.labels[j] ? params.p_in : params.p_out;
      if (rng.uniform() < p) pairs.emplace_back(i, j);
    }
  g.adjacency = adjacency_from_pairs(g.n, std::move(pairs));
  g.features = DenseMatrix(g.n, params.feature_dim);
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < params.feature_dim; ++j) g.features(i, j) = rng.normal();
    g.features(i, g.labels[i] % params.feature_dim) += params.separation;
  }

  Split s;
  std::vector<char> taken(g.n, 0);
  for (int c = 0; c < g.num_classes; ++c) {
    std::vector<int> members;
    for (int i = 0; i < g.n; ++i)
      if (g.labels[i] == c) members.push_back(i);
    require(static_cast<int>(members.size()) >= 21,
            "sbm: block too small for a 20-node training set");
    for (int k : rng.sample_without_replacement(static_cast<int>(members.size()), 20)) {
      s.train.push_back(members[k]);
      taken[members[k]] = 1;
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::vector<int> pool;
  for (int i = 0; i < g.n; ++i)
    if (!taken[i]) pool.push_back(i);
  const int n_val = std::min<int>(500, static_cast<int>(pool.size()) / 2);
  auto vpick = rng.sample_without_replacement(static_cast<int>(pool.size()), n_val);
  std::vector<char> in_val(pool.size(), 0);
  for (int k : vpick) {
    s.val.push_back(pool[k]);
    in_val[k] = 1;
  }
  std::vector<int> rest;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (!in_val[k]) rest.push_back(pool[k]);
  const int n_test = std::min<int>(1000, static_cast<int>(rest.size()));
  for (int k : rng.sample_without_replacement(static_cast<int>(rest.size()), n_test))
    s.test.push_back(rest[k]);
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return {std::move(g), std::move(s)};
}

}  // namespace decorr
