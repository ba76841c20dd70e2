#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "decorr/tape.hpp"

namespace decorr {

struct DecorrConfig {
  double alpha = 0.0;    // weight of the explicit decorrelation loss
  double beta = 0.0;     // weight of the mutual-information loss
  int t = 5;             // hidden-layer stride of the MI loss
  int sample_size = 0;   // Monte-Carlo node count; 0 means ceil(sqrt(N))
  int mi_batch = 0;      // node count per MI evaluation; 0 means min(N, 1024)

  bool enabled() const { return alpha > 0.0 || beta > 0.0; }

  int effective_sample_size(int n) const {
    if (sample_size > 0) return std::min(sample_size, n);
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  }

  int effective_mi_batch(int n) const {
    if (mi_batch > 0) return std::min(mi_batch, n);
    return std::min(n, 1024);
  }

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0, "decorr: negative loss weight");
    require(t >= 1, "decorr: layer stride must be >= 1");
    require(sample_size >= 0 && mi_batch >= 0, "decorr: negative sample size");
  }
};

/// Bilinear discriminator weights for scoring (input feature, hidden
/// representation) pairs.
struct Discriminator {
  DenseMatrix w;  // d0 x d
};

inline Discriminator init_discriminator(int input_dim, int hidden, Rng& rng) {
  return {glorot_uniform(input_dim, hidden, rng)};
}

/// Uniform sample of node indices without replacement; fresh on every call.
inline std::vector<int> monte_carlo_sample(int n, int sample_size, Rng& rng) {
  require(sample_size >= 1 && sample_size <= n,
          "monte_carlo_sample: sample size outside [1, N]");
  return rng.sample_without_replacement(n, sample_size);
}

// Frobenius norm of a node's value, off the tape.
inline double frobenius_value(const Tape& t, Var v) {
  double acc = 0.0;
  for (double x : t.value(v).data) acc += x * x;
  return std::sqrt(acc);
}

/// || C/||C||_F - I_d/sqrt(d) ||_F with C the centered Gram of the rows,
/// scaled by 1/(m-1). Zero exactly when the centered Gram is a positive
/// multiple of the identity; always in [0, 2]. Returns nullopt when the
/// representation is degenerate (all rows constant), which callers treat as a
/// zero contribution.
inline std::optional<Var> decorr_loss(Tape& t, Var h) {
  const int m = h.rows;
  const int d = h.cols;
  require(m >= 2, "decorr_loss: need at least two rows");
  Var mean = t.scale(t.col_sum(h), 1.0 / m);
  Var centered = t.add_rowvec(h, t.scale(mean, -1.0));
  Var c = t.scale(t.gram(centered), 1.0 / (m - 1));
  if (frobenius_value(t, c) <= 1e-30) return std::nullopt;
  Var frob = t.sqrt_(t.sum(t.mul(c, c)));
  Var normalized = t.div_by_scalar(c, frob);
  DenseMatrix target = DenseMatrix::identity(d);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) target(i, i) = inv_sqrt_d;
  Var diff = t.sub(normalized, t.constant(std::move(target)));
  return t.sqrt_(t.sum(t.mul(diff, diff)));
}

struct DecorrLossResult {
  std::optional<Var> loss;      // absent when every layer was degenerate
  int degenerate_layers = 0;
  std::vector<int> sample;      // the Monte-Carlo node sample that was used
};

/// Sum of the decorrelation loss over every hidden layer, each restricted to
/// one shared Monte-Carlo row sample. Gradients flow only through the
/// sampled rows.
inline DecorrLossResult total_decorr_loss(Tape& t, const std::vector<Var>& hidden,
                                          int n, const DecorrConfig& cfg, Rng& rng) {
  DecorrLossResult res;
  if (hidden.empty()) return res;
  res.sample = monte_carlo_sample(n, cfg.effective_sample_size(n), rng);
  for (Var h : hidden) {
    Var rows = res.sample.size() == static_cast<std::size_t>(n)
                   ? h
                   : t.gather_rows(h, res.sample);
    std::optional<Var> term = decorr_loss(t, rows);
    if (!term) {
      ++res.degenerate_layers;
      continue;
    }
    res.loss = res.loss ? t.add(*res.loss, *term) : *term;
  }
  return res;
}

/// sigma(x^T W h) for one (input feature, hidden representation) pair given
/// as 1 x d0 and 1 x d nodes.
inline Var discriminator_score(Tape& t, Var x, Var h, Var w) {
  require(x.rows == 1 && h.rows == 1, "discriminator_score: expects single rows");
  return t.sigmoid(t.row_sum(t.mul(t.matmul(x, w), h)));
}

// Batched scores sigma(x_i^T W h_i) as a column vector.
inline Var discriminator_scores(Tape& t, Var xb, Var hb, Var w) {
  return t.sigmoid(t.row_sum(t.mul(t.matmul(xb, w), hb)));
}

/// MI lower-bound loss for one layer: minus the mean discriminator score on
/// aligned pairs plus log-mean-exp of the scores on pairs whose input rows
/// were shuffled by a uniform random permutation of the batch.
inline Var mi_loss(Tape& t, Var h, Var x, Var w, const std::vector<int>& batch,
                   Rng& rng) {
  require(batch.size() >= 2, "mi_loss: batch must contain at least two nodes");
  const int b = static_cast<int>(batch.size());
  Var xb = t.gather_rows(x, batch);
  Var hb = t.gather_rows(h, batch);
  Var pos = discriminator_scores(t, xb, hb, w);
  Var first = t.scale(t.sum(pos), -1.0 / b);
  Var xneg = t.gather_rows(xb, rng.permutation(b));
  Var neg = discriminator_scores(t, xneg, hb, w);
  return t.add(first, t.logmeanexp(neg));
}

struct MiLossResult {
  std::optional<Var> loss;       // absent when no layer index is a multiple of t
  std::vector<int> layers_used;  // 1-based hidden layer indices
};

/// MI loss summed over hidden layers t, 2t, 3t, ... <= K-1, sharing one node
/// batch; the negative-pair permutation is drawn per layer.
inline MiLossResult total_mi_loss(Tape& t, const std::vector<Var>& hidden, Var x,
                                  Var w, int n, const DecorrConfig& cfg, Rng& rng) {
  MiLossResult res;
  const int k_minus_1 = static_cast<int>(hidden.size());
  if (k_minus_1 < cfg.t) return res;
  std::vector<int> batch =
      rng.sample_without_replacement(n, cfg.effective_mi_batch(n));
  for (int i = cfg.t; i <= k_minus_1; i += cfg.t) {
    Var term = mi_loss(t, hidden[i - 1], x, w, batch, rng);
    res.loss = res.loss ? t.add(*res.loss, term) : term;
    res.layers_used.push_back(i);
  }
  return res;
}

struct ObjectiveResult {
  Var total;
  double l_class = 0.0;
  double l_d = 0.0;
  double l_m = 0.0;
  int degenerate_layers = 0;
};

/// L_class + alpha * L_D + beta * L_M on one tape. Randomness is consumed in
/// a fixed order: the decorrelation row sample, then the MI batch, then one
/// permutation per MI layer.
inline ObjectiveResult overall_objective(Tape& t, Var logits,
                                         const std::vector<int>& labels,
                                         const std::vector<int>& train_mask,
                                         const std::vector<Var>& hidden, Var x,
                                         const DecorrConfig& cfg,
                                         std::optional<Var> disc_w, Rng& rng) {
  cfg.validate();
  ObjectiveResult res;
  Var ce = t.softmax_cross_entropy(logits, labels, train_mask);
  res.l_class = t.scalar(ce);
  Var total = ce;
  if (cfg.alpha > 0.0) {
    DecorrLossResult ld = total_decorr_loss(t, hidden, logits.rows, cfg, rng);
    res.degenerate_layers = ld.degenerate_layers;
    if (ld.loss) {
      res.l_d = t.scalar(*ld.loss);
      total = t.add(total, t.scale(*ld.loss, cfg.alpha));
    }
  }
  if (cfg.beta > 0.0) {
    require(disc_w.has_value() || static_cast<int>(hidden.size()) < cfg.t,
            "overall_objective: MI loss requires discriminator weights");
    MiLossResult lm =
        disc_w ? total_mi_loss(t, hidden, x, *disc_w, logits.rows, cfg, rng)
               : MiLossResult{};
    if (lm.loss) {
      res.l_m = t.scalar(*lm.loss);
      total = t.add(total, t.scale(*lm.loss, cfg.beta));
    }
  }
  res.total = total;
  return res;
}

}  // namespace decorr
