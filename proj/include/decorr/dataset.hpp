#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "decorr/graph.hpp"

namespace decorr {

struct ResolvedData {
  Graph graph;
  Split split;
  std::string name;
};

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Synthetic dataset recipes:
///   sbm:blocks=4x250,pin=0.05,pout=0.005,dim=16,sep=2,seed=0
///   er:n=1000,p=0.01,dim=100,seed=0
/// Block lists also parse as blocks=200+200+300.
inline ResolvedData synthetic_dataset(const std::string& recipe) {
  auto colon = recipe.find(':');
  const std::string kind = recipe.substr(0, colon);
  std::uint64_t seed = 0;
  if (kind == "sbm") {
    SbmParams p;
    p.block_sizes.clear();
    if (colon != std::string::npos)
      for (const std::string& kv : detail::split_on(recipe.substr(colon + 1), ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw DataError("synthetic: bad key=value '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "blocks") {
          auto x = val.find('x');
          if (x != std::string::npos) {
            int count = std::stoi(val.substr(0, x));
            int size = std::stoi(val.substr(x + 1));
            p.block_sizes.assign(count, size);
          } else {
            for (const std::string& b : detail::split_on(val, '+'))
              p.block_sizes.push_back(std::stoi(b));
          }
        } else if (key == "pin") p.p_in = parse_double(val);
        else if (key == "pout") p.p_out = parse_double(val);
        else if (key == "dim") p.feature_dim = std::stoi(val);
        else if (key == "sep") p.separation = parse_double(val);
        else if (key == "seed") seed = std::stoull(val);
        else throw DataError("synthetic sbm: unknown key '" + key + "'");
      }
    if (p.block_sizes.empty()) p.block_sizes = {250, 250, 250, 250};
    Rng rng(seed);
    auto [g, s] = sbm_graph(p, rng);
    return {std::move(g), std::move(s), "synthetic-" + recipe};
  }
  if (kind == "er") {
    int n = 1000, dim = 100;
    double prob = 0.01;
    if (colon != std::string::npos)
      for (const std::string& kv : detail::split_on(recipe.substr(colon + 1), ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw DataError("synthetic: bad key=value '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "n") n = std::stoi(val);
        else if (key == "p") prob = parse_double(val);
        else if (key == "dim") dim = std::stoi(val);
        else if (key == "seed") seed = std::stoull(val);
        else throw DataError("synthetic er: unknown key '" + key + "'");
      }
    Rng rng(seed);
    Graph g = erdos_renyi_graph(n, prob, rng, dim);
    return {std::move(g), Split{}, "synthetic-" + recipe};
  }
  throw DataError("unknown synthetic recipe kind: '" + kind + "'");
}

/// Resolve a dataset path against the working directory and then
/// DECORR_DATA_DIR.
inline std::string resolve_dataset_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("DECORR_DATA_DIR")) {
    fs::path candidate = fs::path(root) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  throw DataError("dataset file not found: " + path);
}

/// Load a dataset file (or build a synthetic one) together with a split: the
/// file's own split when present, otherwise a planetoid split drawn with
/// split_seed.
inline ResolvedData resolve_dataset(const std::string& dataset_path,
                                    const std::string& synthetic_recipe,
                                    std::uint64_t split_seed = 0) {
  require(dataset_path.empty() != synthetic_recipe.empty(),
          "need exactly one of a dataset path or a synthetic recipe");
  if (!synthetic_recipe.empty()) return synthetic_dataset(synthetic_recipe);
  LoadedGraph loaded = load_graph(resolve_dataset_path(dataset_path));
  ResolvedData data;
  data.name = std::filesystem::path(dataset_path).stem().string();
  data.graph = std::move(loaded.graph);
  if (loaded.split && !loaded.split->train.empty()) {
    data.split = *loaded.split;
  } else {
    Rng rng(split_seed);
    data.split = planetoid_split(data.graph, rng);
  }
  return data;
}

}  // namespace decorr
