#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "decorr/dataset.hpp"
#include "decorr/trainer.hpp"

namespace decorr {

struct SweepSpec {
  std::string dataset;
  std::string synthetic;
  Json grid;  // flag name -> array of values
  int repeats = 1;
  std::string out_dir;
  int threads = 0;  // 0 means hardware concurrency
  TrainConfig base;
};

inline SweepSpec read_sweep_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sweep spec: " + path);
  Json j = Json::parse(in);
  SweepSpec spec;
  spec.dataset = j.value("dataset", std::string());
  spec.synthetic = j.value("synthetic", std::string());
  spec.grid = j.at("grid");
  require(spec.grid.is_object() && !spec.grid.empty(), "sweep: grid must be a nonempty object");
  spec.repeats = j.value("repeats", 1);
  require(spec.repeats >= 1, "sweep: repeats must be >= 1");
  spec.out_dir = j.value("out", std::string("sweep_out"));
  spec.threads = j.value("threads", 0);
  if (j.contains("epochs")) spec.base.epochs = j.at("epochs").get<int>();
  if (j.contains("missing_features"))
    spec.base.missing_features = j.at("missing_features").get<bool>();
  return spec;
}

inline void apply_flag(TrainConfig& cfg, const std::string& key, const Json& v) {
  if (key == "model") cfg.model.kind = model_kind_from_string(v.get<std::string>());
  else if (key == "layers") cfg.model.layers = v.get<int>();
  else if (key == "hidden") cfg.model.hidden = v.get<int>();
  else if (key == "norm") cfg.model.norm = norm_kind_from_string(v.get<std::string>());
  else if (key == "residual") cfg.model.residual = v.get<bool>();
  else if (key == "dropout") cfg.model.dropout = v.get<double>();
  else if (key == "cheby_order") cfg.model.cheby_order = v.get<int>();
  else if (key == "bias") cfg.model.bias = v.get<bool>();
  else if (key == "alpha") cfg.decorr.alpha = v.get<double>();
  else if (key == "beta") cfg.decorr.beta = v.get<double>();
  else if (key == "t") cfg.decorr.t = v.get<int>();
  else if (key == "sample_size") cfg.decorr.sample_size = v.get<int>();
  else if (key == "mi_batch") cfg.decorr.mi_batch = v.get<int>();
  else if (key == "lr") cfg.lr = v.get<double>();
  else if (key == "weight_decay") cfg.weight_decay = v.get<double>();
  else if (key == "epochs") cfg.epochs = v.get<int>();
  else if (key == "dropedge") cfg.dropedge = v.get<double>();
  else if (key == "missing_features") cfg.missing_features = v.get<bool>();
  else if (key == "metric_every") cfg.metric_every = v.get<int>();
  else throw DataError("sweep: unknown grid key '" + key + "'");
}

struct SweepCell {
  int index = 0;
  Json assignment;  // key -> chosen value, in grid key order
  TrainConfig cfg;
};

inline std::vector<SweepCell> expand_grid(const SweepSpec& spec) {
  std::vector<std::string> keys;
  for (auto it = spec.grid.begin(); it != spec.grid.end(); ++it) {
    keys.push_back(it.key());
    require(it.value().is_array() && !it.value().empty(),
            "sweep: grid value for '" + it.key() + "' must be a nonempty array");
  }
  std::vector<SweepCell> cells;
  std::vector<std::size_t> cursor(keys.size(), 0);
  for (;;) {
    SweepCell cell;
    cell.index = static_cast<int>(cells.size());
    cell.cfg = spec.base;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const Json& v = spec.grid.at(keys[k]).at(cursor[k]);
      cell.assignment[keys[k]] = v;
      apply_flag(cell.cfg, keys[k], v);
    }
    cells.push_back(std::move(cell));
    std::size_t k = keys.size();
    while (k > 0) {
      --k;
      if (++cursor[k] < spec.grid.at(keys[k]).size()) break;
      cursor[k] = 0;
      if (k == 0) return cells;
    }
  }
}

/// Method label used for the layer-by-method summary table.
inline std::string method_label(const TrainConfig& cfg) {
  std::vector<std::string> parts;
  if (cfg.decorr.alpha > 0.0 && cfg.decorr.beta > 0.0) parts.push_back("decorr");
  else if (cfg.decorr.alpha > 0.0) parts.push_back("decorr-a");
  else if (cfg.decorr.beta > 0.0) parts.push_back("decorr-b");
  if (cfg.dropedge > 0.0) parts.push_back("dropedge");
  if (cfg.model.norm == NormKind::Batch) parts.push_back("batchnorm");
  if (cfg.model.norm == NormKind::Pair) parts.push_back("pairnorm");
  if (cfg.model.residual) parts.push_back("residual");
  if (parts.empty()) return "none";
  std::string label = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) label += "+" + parts[i];
  return label;
}

inline std::string cell_dir(const std::string& out_dir, int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "cell_%03d", index);
  return (std::filesystem::path(out_dir) / buf).string();
}

/// Run every cell x seed in a worker pool; each run writes its own file, so
/// partial failures leave an .error.txt marker and the sweep continues.
inline void run_sweep(const SweepSpec& spec, std::ostream& log) {
  namespace fs = std::filesystem;
  ResolvedData data = resolve_dataset(spec.dataset, spec.synthetic);
  std::vector<SweepCell> cells = expand_grid(spec);
  fs::create_directories(spec.out_dir);
  for (const SweepCell& cell : cells) {
    fs::create_directories(cell_dir(spec.out_dir, cell.index));
    std::ofstream meta(fs::path(cell_dir(spec.out_dir, cell.index)) / "cell.json");
    Json j;
    j["assignment"] = cell.assignment;
    j["config"] = to_json(cell.cfg);
    meta << j.dump(2) << '\n';
  }

  struct Job {
    const SweepCell* cell;
    int seed;
  };
  std::vector<Job> jobs;
  for (const SweepCell& cell : cells)
    for (int s = 0; s < spec.repeats; ++s) jobs.push_back({&cell, s});

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const unsigned n_threads = spec.threads > 0
                                 ? static_cast<unsigned>(spec.threads)
                                 : std::max(1u, std::thread::hardware_concurrency());
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      TrainConfig cfg = job.cell->cfg;
      cfg.seed = static_cast<std::uint64_t>(job.seed);
      const std::string dir = cell_dir(spec.out_dir, job.cell->index);
      const std::string run_path = dir + "/run_" + std::to_string(job.seed) + ".json";
      try {
        RunResult r = train(data.graph, data.split, cfg);
        write_run_result(run_path, r);
        std::lock_guard<std::mutex> lk(log_mutex);
        log << "cell " << job.cell->index << " seed " << job.seed << ": test_acc="
            << format_double(r.test_acc) << (r.diverged ? " (diverged)" : "") << '\n';
      } catch (const std::exception& e) {
        std::ofstream err(dir + "/run_" + std::to_string(job.seed) + ".error.txt");
        err << e.what() << '\n';
        std::lock_guard<std::mutex> lk(log_mutex);
        log << "cell " << job.cell->index << " seed " << job.seed << ": FAILED: " << e.what()
            << '\n';
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

struct CellSummary {
  int index = 0;
  Json assignment;
  TrainConfig cfg;
  int runs = 0;
  int failures = 0;
  int diverged = 0;
  double mean_val = 0.0;
  double mean_test = 0.0;
  double std_test = 0.0;
};

/// Aggregation is a pure function of the run files on disk: re-running it
/// reproduces summary.csv byte for byte.
inline std::vector<CellSummary> aggregate_sweep(const SweepSpec& spec) {
  namespace fs = std::filesystem;
  std::vector<SweepCell> cells = expand_grid(spec);
  std::vector<CellSummary> out;
  for (const SweepCell& cell : cells) {
    CellSummary cs;
    cs.index = cell.index;
    cs.assignment = cell.assignment;
    cs.cfg = cell.cfg;
    double sum_t = 0.0, sum_t2 = 0.0, sum_v = 0.0;
    for (int s = 0; s < spec.repeats; ++s) {
      const std::string run_path =
          cell_dir(spec.out_dir, cell.index) + "/run_" + std::to_string(s) + ".json";
      if (!fs::exists(run_path)) {
        ++cs.failures;
        continue;
      }
      RunResult r = read_run_result(run_path);
      if (r.diverged || r.best_epoch < 0) {
        ++cs.diverged;
        continue;
      }
      ++cs.runs;
      sum_t += r.test_acc;
      sum_t2 += r.test_acc * r.test_acc;
      sum_v += r.epochs[r.best_epoch].acc_val;
    }
    if (cs.runs > 0) {
      cs.mean_test = sum_t / cs.runs;
      cs.std_test = std::sqrt(std::max(0.0, sum_t2 / cs.runs - cs.mean_test * cs.mean_test));
      cs.mean_val = sum_v / cs.runs;
    }
    out.push_back(std::move(cs));
  }
  return out;
}

inline void write_sweep_summary_csv(std::ostream& out, const SweepSpec& spec,
                                    const std::vector<CellSummary>& cells) {
  std::vector<std::string> keys;
  for (auto it = spec.grid.begin(); it != spec.grid.end(); ++it) keys.push_back(it.key());
  out << "cell";
  for (const std::string& k : keys) out << ',' << k;
  out << ",method,runs,failures,diverged,mean_val_acc,mean_test_acc,std_test_acc\n";
  for (const CellSummary& c : cells) {
    out << c.index;
    for (const std::string& k : keys) {
      const Json& v = c.assignment.at(k);
      out << ',' << (v.is_string() ? v.get<std::string>() : v.dump());
    }
    out << ',' << method_label(c.cfg) << ',' << c.runs << ',' << c.failures << ','
        << c.diverged << ',' << format_double(c.mean_val) << ','
        << format_double(c.mean_test) << ',' << format_double(c.std_test) << '\n';
  }
}

/// Layer-by-method table: for each (model, method, layers) the cell with the
/// best mean validation accuracy is selected; test accuracy is never used for
/// selection.
inline void write_sweep_table_md(std::ostream& out, const std::vector<CellSummary>& cells) {
  std::vector<int> layer_values;
  std::vector<std::string> row_keys;  // "model/method"
  for (const CellSummary& c : cells) {
    if (std::find(layer_values.begin(), layer_values.end(), c.cfg.model.layers) ==
        layer_values.end())
      layer_values.push_back(c.cfg.model.layers);
    std::string rk = std::string(to_string(c.cfg.model.kind)) + "/" + method_label(c.cfg);
    if (std::find(row_keys.begin(), row_keys.end(), rk) == row_keys.end())
      row_keys.push_back(rk);
  }
  std::sort(layer_values.begin(), layer_values.end());

  out << "| method |";
  for (int l : layer_values) out << " L" << l << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < layer_values.size(); ++i) out << "---|";
  out << '\n';
  for (const std::string& rk : row_keys) {
    out << "| " << rk << " |";
    for (int l : layer_values) {
      const CellSummary* best = nullptr;
      for (const CellSummary& c : cells) {
        std::string crk = std::string(to_string(c.cfg.model.kind)) + "/" + method_label(c.cfg);
        if (crk != rk || c.cfg.model.layers != l || c.runs == 0) continue;
        if (!best || c.mean_val > best->mean_val) best = &c;
      }
      if (best) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " %.1f ± %.1f |", 100.0 * best->mean_test,
                      100.0 * best->std_test);
        out << buf;
      } else {
        out << " - |";
      }
    }
    out << '\n';
  }

  // Best depth per method across the whole grid, again selected by mean
  // validation accuracy.
  out << "\n| method | Acc | #K |\n|---|---|---|\n";
  for (const std::string& rk : row_keys) {
    const CellSummary* best = nullptr;
    for (const CellSummary& c : cells) {
      std::string crk = std::string(to_string(c.cfg.model.kind)) + "/" + method_label(c.cfg);
      if (crk != rk || c.runs == 0) continue;
      if (!best || c.mean_val > best->mean_val) best = &c;
    }
    if (best) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "| %s | %.1f ± %.1f | %d |\n", rk.c_str(),
                    100.0 * best->mean_test, 100.0 * best->std_test, best->cfg.model.layers);
      out << buf;
    }
  }
}

inline void write_sweep_outputs(const SweepSpec& spec) {
  std::vector<CellSummary> cells = aggregate_sweep(spec);
  std::ofstream csv(std::filesystem::path(spec.out_dir) / "summary.csv");
  if (!csv) throw DataError("cannot write sweep summary");
  write_sweep_summary_csv(csv, spec, cells);
  std::ofstream md(std::filesystem::path(spec.out_dir) / "table.md");
  if (!md) throw DataError("cannot write sweep table");
  write_sweep_table_md(md, cells);
}

}  // namespace decorr
