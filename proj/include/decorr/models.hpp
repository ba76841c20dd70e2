#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "decorr/graph.hpp"
#include "decorr/tape.hpp"

namespace decorr {

enum class ModelKind { Gcn, Cheby, Mlp };
enum class NormKind { None, Batch, Pair };

struct ModelConfig {
  ModelKind kind = ModelKind::Gcn;
  int layers = 2;    // K
  int hidden = 64;   // d
  int input_dim = 0; // d0
  int classes = 0;   // C
  NormKind norm = NormKind::None;
  bool residual = false;
  double dropout = 0.0;
  int cheby_order = 2;
  bool bias = true;
  double pairnorm_scale = 1.0;

  int layer_in(int l) const { return l == 1 ? input_dim : hidden; }
  int layer_out(int l) const { return l == layers ? classes : hidden; }
  int weights_per_layer() const { return kind == ModelKind::Cheby ? cheby_order + 1 : 1; }

  // input_dim and classes are usually derived from the graph; validate_widths
  // runs once they are known.
  void validate() const {
    require(layers >= 1, "model: layers must be >= 1");
    require(hidden >= 1, "model: hidden width must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout outside [0, 1)");
    require(kind != ModelKind::Cheby || cheby_order >= 0, "model: negative cheby order");
  }

  void validate_widths() const {
    validate();
    require(input_dim >= 1 && classes >= 1, "model: widths must be >= 1");
  }
};

struct LayerParams {
  std::vector<DenseMatrix> weights;  // one matrix, or cheby_order+1 for ChebyNet
  DenseMatrix bias;                  // 1 x out, empty when biases are disabled
  DenseMatrix bn_gamma, bn_beta;     // 1 x out, batch norm only
  DenseMatrix bn_running_mean, bn_running_var;  // buffers, not trained
};

struct Parameters {
  std::vector<LayerParams> layers;
};

enum class ParamKind { Weight, Bias, NormAffine };

struct ParamRef {
  std::string name;
  DenseMatrix* tensor = nullptr;
  ParamKind kind = ParamKind::Weight;
};

inline Parameters init_parameters(const ModelConfig& cfg, Rng& rng) {
  cfg.validate_widths();
  Parameters p;
  p.layers.resize(cfg.layers);
  for (int l = 1; l <= cfg.layers; ++l) {
    LayerParams& lp = p.layers[l - 1];
    const int in = cfg.layer_in(l);
    const int out = cfg.layer_out(l);
    for (int k = 0; k < cfg.weights_per_layer(); ++k)
      lp.weights.push_back(glorot_uniform(in, out, rng));
    if (cfg.bias) lp.bias = DenseMatrix(1, out);
    if (cfg.norm == NormKind::Batch && l < cfg.layers) {
      lp.bn_gamma = DenseMatrix(1, out, 1.0);
      lp.bn_beta = DenseMatrix(1, out);
      lp.bn_running_mean = DenseMatrix(1, out);
      lp.bn_running_var = DenseMatrix(1, out, 1.0);
    }
  }
  return p;
}

/// Trainable tensors in a fixed order (running statistics are buffers, not
/// parameters).
inline std::vector<ParamRef> collect_parameters(Parameters& p) {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    LayerParams& lp = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l + 1);
    for (std::size_t k = 0; k < lp.weights.size(); ++k)
      refs.push_back({prefix + ".w" + std::to_string(k), &lp.weights[k], ParamKind::Weight});
    if (lp.bias.data.size())
      refs.push_back({prefix + ".b", &lp.bias, ParamKind::Bias});
    if (lp.bn_gamma.data.size()) {
      refs.push_back({prefix + ".bn_gamma", &lp.bn_gamma, ParamKind::NormAffine});
      refs.push_back({prefix + ".bn_beta", &lp.bn_beta, ParamKind::NormAffine});
    }
  }
  return refs;
}

struct BoundParam {
  DenseMatrix* tensor = nullptr;
  ParamKind kind = ParamKind::Weight;
  Var var;
};

struct ForwardOutput {
  std::vector<Var> hidden;  // H^(1) .. H^(K-1), post activation and norm
  Var logits;               // H^(K), raw
  Var input;                // the features as a constant node on the same tape
  std::vector<BoundParam> bound;
};

/// Center the columns, then rescale so the mean squared row norm is scale^2.
/// An all-zero centered matrix comes back as zeros.
inline Var pairnorm(Tape& t, Var h, double scale) {
  const int n = h.rows;
  require(n >= 1, "pairnorm: empty input");
  Var mu = t.scale(t.col_sum(h), 1.0 / n);
  Var centered = t.add_rowvec(h, t.scale(mu, -1.0));
  Var mean_sq_norm = t.scale(t.sum(t.mul(centered, centered)), 1.0 / n);
  if (t.scalar(mean_sq_norm) <= 1e-30) return t.constant(DenseMatrix(h.rows, h.cols));
  return t.scale(t.div_by_scalar(centered, t.sqrt_(mean_sq_norm)), scale);
}

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-dimension standardization with a learnable affine map. Training mode
/// standardizes with batch statistics and folds them into the running
/// buffers; eval mode standardizes with the stored running statistics.
inline Var batchnorm(Tape& t, Var h, LayerParams& lp, bool training,
                     std::vector<BoundParam>& bound) {
  const int n = h.rows;
  Var gamma = t.leaf(lp.bn_gamma);
  Var beta = t.leaf(lp.bn_beta);
  bound.push_back({&lp.bn_gamma, ParamKind::NormAffine, gamma});
  bound.push_back({&lp.bn_beta, ParamKind::NormAffine, beta});
  Var xhat;
  if (training) {
    require(n >= 2, "batchnorm: need at least two rows in training mode");
    Var mu = t.scale(t.col_sum(h), 1.0 / n);
    Var centered = t.add_rowvec(h, t.scale(mu, -1.0));
    Var var = t.scale(t.col_sum(t.mul(centered, centered)), 1.0 / n);
    const DenseMatrix& mu_v = t.value(mu);
    const DenseMatrix& var_v = t.value(var);
    const double unbias = static_cast<double>(n) / (n - 1);
    for (int j = 0; j < h.cols; ++j) {
      lp.bn_running_mean(0, j) = kBatchNormMomentum * lp.bn_running_mean(0, j) +
                                 (1.0 - kBatchNormMomentum) * mu_v(0, j);
      lp.bn_running_var(0, j) = kBatchNormMomentum * lp.bn_running_var(0, j) +
                                (1.0 - kBatchNormMomentum) * var_v(0, j) * unbias;
    }
    xhat = t.div_rowvec(centered, t.sqrt_(t.add_const(var, kBatchNormEps)));
  } else {
    DenseMatrix denom(1, h.cols);
    for (int j = 0; j < h.cols; ++j)
      denom(0, j) = std::sqrt(lp.bn_running_var(0, j) + kBatchNormEps);
    Var centered = t.add_rowvec(h, t.constant([&] {
      DenseMatrix m = lp.bn_running_mean;
      for (double& v : m.data) v = -v;
      return m;
    }()));
    xhat = t.div_rowvec(centered, t.constant(std::move(denom)));
  }
  return t.add_rowvec(t.mul_rowvec(xhat, gamma), beta);
}

namespace detail {

// Shared layer scaffolding: dropout -> transform (which handles any
// propagation) -> +residual -> norm -> ReLU on every layer except the last,
// which emits raw logits. The transform binds its own weight leaves.
template <typename TransformFn>
ForwardOutput stacked_forward(Tape& t, const ModelConfig& cfg, Parameters& p,
                              const DenseMatrix& x, Rng& rng, bool training,
                              TransformFn&& transform) {
  cfg.validate_widths();
  require(x.cols == cfg.input_dim, "forward: feature width does not match config");
  require(static_cast<int>(p.layers.size()) == cfg.layers,
          "forward: parameter depth does not match config");
  ForwardOutput out;
  out.input = t.constant(x);
  Var h = out.input;
  for (int l = 1; l <= cfg.layers; ++l) {
    LayerParams& lp = p.layers[l - 1];
    Var input = h;
    Var cur = t.dropout(input, cfg.dropout, rng, training);
    cur = transform(lp, cur, out.bound);
    if (cfg.bias) {
      Var b = t.leaf(lp.bias);
      out.bound.push_back({&lp.bias, ParamKind::Bias, b});
      cur = t.add_rowvec(cur, b);
    }
    if (cfg.residual && input.cols == cur.cols) cur = t.add(cur, input);
    if (l < cfg.layers) {
      if (cfg.norm == NormKind::Pair) cur = pairnorm(t, cur, cfg.pairnorm_scale);
      if (cfg.norm == NormKind::Batch) cur = batchnorm(t, cur, lp, training, out.bound);
      cur = t.relu(cur);
      out.hidden.push_back(cur);
    }
    h = cur;
  }
  out.logits = h;
  return out;
}

}  // namespace detail

/// GCN stack: each layer propagates with the normalized self-loop adjacency,
/// then applies one weight matrix.
inline ForwardOutput gcn_forward(Tape& t, const ModelConfig& cfg, Parameters& p,
                                 const SparseCSR& a_hat, const DenseMatrix& x, Rng& rng,
                                 bool training) {
  require(a_hat.rows == x.rows && a_hat.cols == x.rows, "gcn_forward: operator shape");
  return detail::stacked_forward(
      t, cfg, p, x, rng, training,
      [&](LayerParams& lp, Var cur, std::vector<BoundParam>& bound) {
        Var w = t.leaf(lp.weights[0]);
        bound.push_back({&lp.weights[0], ParamKind::Weight, w});
        return t.matmul(t.spmm(a_hat, cur), w);
      });
}

inline ForwardOutput mlp_forward(Tape& t, const ModelConfig& cfg, Parameters& p,
                                 const DenseMatrix& x, Rng& rng, bool training) {
  return detail::stacked_forward(
      t, cfg, p, x, rng, training,
      [&](LayerParams& lp, Var cur, std::vector<BoundParam>& bound) {
        Var w = t.leaf(lp.weights[0]);
        bound.push_back({&lp.weights[0], ParamKind::Weight, w});
        return t.matmul(cur, w);
      });
}

/// Scaled Chebyshev operator 2 L_sym / lambda_max - I with lambda_max fixed
/// at 2. L_sym has unit diagonal on non-isolated nodes, so the result is
/// -D^{-1/2} A D^{-1/2} with -1 on the diagonal of isolated nodes.
inline SparseCSR cheby_operator(const Graph& g) {
  const SparseCSR& a = g.adjacency;
  std::vector<double> inv_sqrt_deg(g.n, 0.0);
  std::vector<std::tuple<int, int, double>> trip;
  trip.reserve(a.values.size() + g.n);
  for (int i = 0; i < g.n; ++i) {
    int deg = a.row_ptr[i + 1] - a.row_ptr[i];
    if (deg > 0)
      inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(deg));
    else
      trip.emplace_back(i, i, -1.0);
  }
  for (int i = 0; i < g.n; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      int j = a.col_idx[k];
      trip.emplace_back(i, j, -inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  return SparseCSR::from_triplets(g.n, g.n, std::move(trip));
}

/// ChebyNet stack: each layer evaluates sum_k T_k(L_hat) H W_k with the
/// Chebyshev recurrence T_0 = I, T_1 = L_hat, T_k = 2 L_hat T_{k-1} - T_{k-2}.
inline ForwardOutput cheby_forward(Tape& t, const ModelConfig& cfg, Parameters& p,
                                   const SparseCSR& l_hat, const DenseMatrix& x, Rng& rng,
                                   bool training) {
  require(l_hat.rows == x.rows && l_hat.cols == x.rows, "cheby_forward: operator shape");
  return detail::stacked_forward(
      t, cfg, p, x, rng, training,
      [&](LayerParams& lp, Var cur, std::vector<BoundParam>& bound) {
        Var w0 = t.leaf(lp.weights[0]);
        bound.push_back({&lp.weights[0], ParamKind::Weight, w0});
        Var acc = t.matmul(cur, w0);
        Var z_prev2 = cur;
        Var z_prev1;
        for (int k = 1; k <= cfg.cheby_order; ++k) {
          Var z = k == 1 ? t.spmm(l_hat, cur)
                         : t.sub(t.scale(t.spmm(l_hat, z_prev1), 2.0), z_prev2);
          Var wk = t.leaf(lp.weights[k]);
          bound.push_back({&lp.weights[k], ParamKind::Weight, wk});
          acc = t.add(acc, t.matmul(z, wk));
          if (k > 1) z_prev2 = z_prev1;
          z_prev1 = z;
        }
        return acc;
      });
}

}  // namespace decorr
