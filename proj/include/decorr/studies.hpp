#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "decorr/graph.hpp"
#include "decorr/metrics.hpp"
#include "decorr/rng.hpp"

namespace decorr {

struct StudyPoint {
  int k = 0;
  double corr_mean = 0.0;
  double corr_std = 0.0;
  double smv_mean = 0.0;
  double smv_std = 0.0;
};

struct StudySeries {
  std::string variant;
  std::vector<StudyPoint> points;
};

namespace detail {

class RunningStats {
 public:
  void add(std::optional<double> v) {
    if (!v) return;
    ++n_;
    sum_ += *v;
    sum_sq_ += *v * *v;
  }
  double mean() const { return n_ ? sum_ / n_ : std::nan(""); }
  double stddev() const {
    if (!n_) return std::nan("");
    double m = mean();
    return std::sqrt(std::max(0.0, sum_sq_ / n_ - m * m));
  }

 private:
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
  int n_ = 0;
};

}  // namespace detail

/// Repeated propagation of standard-normal features: draws X with independent
/// N(0,1) entries, iterates X <- A_hat X and records Corr (and SMV) of the
/// result after each step, averaged over runs. k=0 is the unpropagated
/// baseline.
inline StudySeries propagation_study(const Graph& g, int dim, int k_max, int runs,
                                     Rng& rng, std::string variant = "full",
                                     bool include_smv = true) {
  require(k_max >= 0, "propagation_study: negative depth");
  require(runs >= 1 && dim >= 2, "propagation_study: need runs >= 1 and dim >= 2");
  SparseCSR a_hat = normalize_adjacency(g);
  std::vector<detail::RunningStats> corr_stats(k_max + 1), smv_stats(k_max + 1);
  for (int run = 0; run < runs; ++run) {
    DenseMatrix x(g.n, dim);
    for (double& v : x.data) v = rng.normal();
    for (int k = 0; k <= k_max; ++k) {
      if (k > 0) x = spmm(a_hat, x);
      corr_stats[k].add(corr_metric(x));
      if (include_smv) smv_stats[k].add(smv(x));
    }
  }
  StudySeries series;
  series.variant = std::move(variant);
  for (int k = 0; k <= k_max; ++k)
    series.points.push_back({k, corr_stats[k].mean(), corr_stats[k].stddev(),
                             smv_stats[k].mean(), smv_stats[k].stddev()});
  return series;
}

/// Propagation study on the graph itself and on its largest connected
/// component.
inline std::vector<StudySeries> propagation_study_full_lcc(const Graph& g, int dim,
                                                           int k_max, int runs, Rng& rng,
                                                           bool include_smv = true) {
  std::vector<StudySeries> out;
  out.push_back(propagation_study(g, dim, k_max, runs, rng, "full", include_smv));
  Graph lcc = largest_connected_component(g);
  out.push_back(propagation_study(lcc, dim, k_max, runs, rng, "lcc", include_smv));
  return out;
}

/// Forward passes of an untrained MLP on standard-normal features. Depth k
/// applies k transforms of the given hidden width (optionally with ReLU)
/// followed by a fresh linear readout back to the input dimensionality, whose
/// Corr (and SMV) is recorded. No training happens anywhere.
inline StudySeries transformation_study(int n, int dim, int hidden, int k_max, int runs,
                                        bool use_relu, Rng& rng,
                                        bool include_smv = true) {
  require(n >= 2 && dim >= 2 && hidden >= 1, "transformation_study: bad sizes");
  require(k_max >= 0 && runs >= 1, "transformation_study: bad counts");
  std::vector<detail::RunningStats> corr_stats(k_max + 1), smv_stats(k_max + 1);
  for (int run = 0; run < runs; ++run) {
    DenseMatrix x(n, dim);
    for (double& v : x.data) v = rng.normal();
    corr_stats[0].add(corr_metric(x));
    if (include_smv) smv_stats[0].add(smv(x));
    DenseMatrix h = x;
    for (int k = 1; k <= k_max; ++k) {
      h = matmul(h, glorot_uniform(h.cols, hidden, rng));
      if (use_relu)
        for (double& v : h.data) v = v > 0.0 ? v : 0.0;
      DenseMatrix readout = matmul(h, glorot_uniform(hidden, dim, rng));
      corr_stats[k].add(corr_metric(readout));
      if (include_smv) smv_stats[k].add(smv(readout));
    }
  }
  StudySeries series;
  series.variant = use_relu ? "relu" : "linear";
  for (int k = 0; k <= k_max; ++k)
    series.points.push_back({k, corr_stats[k].mean(), corr_stats[k].stddev(),
                             smv_stats[k].mean(), smv_stats[k].stddev()});
  return series;
}

inline void write_study_csv(std::ostream& out, const std::vector<StudySeries>& series) {
  out << "K,corr_mean,corr_std,smv_mean,smv_std,variant\n";
  for (const auto& s : series)
    for (const auto& p : s.points)
      out << p.k << ',' << format_double(p.corr_mean) << ',' << format_double(p.corr_std)
          << ',' << format_double(p.smv_mean) << ',' << format_double(p.smv_std) << ','
          << s.variant << '\n';
}

inline void write_study_csv(const std::string& path, const std::vector<StudySeries>& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write study csv: " + path);
  write_study_csv(out, series);
}

}  // namespace decorr
