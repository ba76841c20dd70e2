#include <catch2/catch_amalgamated.hpp>

#include "decorr/metrics.hpp"
#include "decorr/models.hpp"
#include "decorr/trainer.hpp"
#include "test_util.hpp"

using namespace decorr;

namespace {

ModelConfig small_cfg(ModelKind kind, int layers, int hidden, int in, int classes) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.layers = layers;
  cfg.hidden = hidden;
  cfg.input_dim = in;
  cfg.classes = classes;
  return cfg;
}

}  // namespace

TEST_CASE("glorot init bounds, determinism, mean") {
  Rng rng(1);
  ModelConfig cfg = small_cfg(ModelKind::Gcn, 2, 2, 4, 3);
  Parameters p = init_parameters(cfg, rng);
  const double bound = std::sqrt(6.0 / (4 + 2));
  CHECK(bound == Catch::Approx(1.0));
  for (double v : p.layers[0].weights[0].data) {
    CHECK(v <= bound);
    CHECK(v >= -bound);
  }
  for (double v : p.layers[0].bias.data) CHECK(v == 0.0);

  Rng rng_a(9), rng_b(9);
  Parameters pa = init_parameters(cfg, rng_a);
  Parameters pb = init_parameters(cfg, rng_b);
  CHECK(pa.layers[0].weights[0].data == pb.layers[0].weights[0].data);
  CHECK(pa.layers[1].weights[0].data == pb.layers[1].weights[0].data);

  Rng rng_c(33);
  double mean = 0.0;
  int count = 0;
  for (int rep = 0; rep < 10; ++rep) {
    DenseMatrix w = glorot_uniform(10, 10, rng_c);
    for (double v : w.data) mean += v;
    count += 100;
  }
  CHECK(std::abs(mean / count) < 0.05);
}

TEST_CASE("one-layer gcn is propagate-transform with no activation") {
  Graph g = testutil::tiny_graph();
  SparseCSR a_hat = normalize_adjacency(g);
  ModelConfig cfg = small_cfg(ModelKind::Gcn, 1, 8, 4, 2);
  cfg.dropout = 0.5;
  Rng rng(2);
  Parameters p = init_parameters(cfg, rng);

  Tape t;
  Rng fwd_rng(7);
  ForwardOutput out = gcn_forward(t, cfg, p, a_hat, g.features, fwd_rng, true);
  CHECK(out.hidden.empty());

  // replay the dropout mask with the same stream, then apply the layer by hand
  Tape t2;
  Rng replay(7);
  Var dropped = t2.dropout(t2.constant(g.features), 0.5, replay, true);
  DenseMatrix want = spmm(a_hat, t2.value(dropped));
  want = matmul(want, p.layers[0].weights[0]);
  CHECK(t.value(out.logits).data == want.data);  // bias is zero at init
  CHECK((t.value(out.logits).rows == 6 && t.value(out.logits).cols == 2));
}

TEST_CASE("gcn with identity operator equals mlp bitwise") {
  Graph g = testutil::tiny_graph();
  ModelConfig cfg = small_cfg(ModelKind::Gcn, 3, 5, 4, 2);
  cfg.dropout = 0.3;
  Rng rng(3);
  Parameters p = init_parameters(cfg, rng);
  Parameters p2 = p;

  SparseCSR eye = SparseCSR::identity(g.n);
  Tape ta, tb;
  Rng ra(11), rb(11);
  ForwardOutput a = gcn_forward(ta, cfg, p, eye, g.features, ra, true);
  ModelConfig ml = cfg;
  ml.kind = ModelKind::Mlp;
  ForwardOutput b = mlp_forward(tb, ml, p2, g.features, rb, true);
  CHECK(ta.value(a.logits).data == tb.value(b.logits).data);
  REQUIRE(a.hidden.size() == b.hidden.size());
  for (std::size_t i = 0; i < a.hidden.size(); ++i)
    CHECK(ta.value(a.hidden[i]).data == tb.value(b.hidden[i]).data);
}

TEST_CASE("two-layer gcn matches a hand evaluation on the path graph") {
  Graph path;
  path.n = 3;
  path.num_classes = 2;
  path.labels = {0, 1, 0};
  path.features = DenseMatrix(3, 2);
  path.features(0, 0) = 1.0;
  path.features(1, 1) = -2.0;
  path.features(2, 0) = 0.5;
  path.adjacency = adjacency_from_pairs(3, {{0, 1}, {1, 2}});
  SparseCSR a_hat = normalize_adjacency(path);

  ModelConfig cfg = small_cfg(ModelKind::Gcn, 2, 2, 2, 2);
  Rng rng(4);
  Parameters p = init_parameters(cfg, rng);
  p.layers[0].weights[0] = DenseMatrix(2, 2);
  p.layers[0].weights[0](0, 0) = 1.0;
  p.layers[0].weights[0](1, 1) = -1.0;
  p.layers[0].bias(0, 0) = 0.25;
  p.layers[1].weights[0] = DenseMatrix(2, 2);
  p.layers[1].weights[0](0, 1) = 2.0;
  p.layers[1].weights[0](1, 0) = 1.0;
  p.layers[1].bias(0, 1) = -0.5;

  Tape t;
  Rng fwd(0);
  ForwardOutput out = gcn_forward(t, cfg, p, a_hat, path.features, fwd, false);

  DenseMatrix h = spmm(a_hat, path.features);
  h = matmul(h, p.layers[0].weights[0]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) h(i, j) = std::max(0.0, h(i, j) + p.layers[0].bias(0, j));
  DenseMatrix logits = matmul(spmm(a_hat, h), p.layers[1].weights[0]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) logits(i, j) += p.layers[1].bias(0, j);

  REQUIRE(out.hidden.size() == 1);
  for (std::size_t i = 0; i < logits.data.size(); ++i)
    CHECK(t.value(out.logits).data[i] == Catch::Approx(logits.data[i]).margin(1e-14));
  CHECK(t.value(out.hidden[0]).data == h.data);
}

TEST_CASE("one-layer mlp with identity weights is dropout alone") {
  Graph g = testutil::tiny_graph();
  ModelConfig cfg = small_cfg(ModelKind::Mlp, 1, 4, 4, 4);
  cfg.dropout = 0.5;
  cfg.bias = false;
  Rng rng(5);
  Parameters p = init_parameters(cfg, rng);
  p.layers[0].weights[0] = DenseMatrix::identity(4);

  Tape t;
  Rng fwd(9);
  ForwardOutput out = mlp_forward(t, cfg, p, g.features, fwd, true);
  Tape t2;
  Rng replay(9);
  Var dropped = t2.dropout(t2.constant(g.features), 0.5, replay, true);
  CHECK(t.value(out.logits).data == t2.value(dropped).data);

  p.layers[0].weights[0] = DenseMatrix(4, 4);  // zero weights -> zero logits
  Tape t3;
  Rng fwd3(9);
  ForwardOutput zero = mlp_forward(t3, cfg, p, g.features, fwd3, true);
  for (double v : t3.value(zero.logits).data) CHECK(v == 0.0);
}

TEST_CASE("cheby order zero reduces to the mlp transform") {
  Graph g = testutil::tiny_graph();
  ModelConfig cheby = small_cfg(ModelKind::Cheby, 2, 5, 4, 2);
  cheby.cheby_order = 0;
  Rng rng(6);
  Parameters p = init_parameters(cheby, rng);
  Parameters pm = p;

  SparseCSR l_hat = cheby_operator(g);
  Tape ta, tb;
  Rng ra(13), rb(13);
  ForwardOutput a = cheby_forward(ta, cheby, p, l_hat, g.features, ra, true);
  ModelConfig mlp = cheby;
  mlp.kind = ModelKind::Mlp;
  ForwardOutput b = mlp_forward(tb, mlp, pm, g.features, rb, true);
  CHECK(ta.value(a.logits).data == tb.value(b.logits).data);
}

TEST_CASE("chebyshev recurrence matches the dense polynomial") {
  Rng rng(19);
  Graph g = erdos_renyi_graph(5, 0.6, rng, 3);
  for (double& v : g.features.data) v = rng.normal();
  SparseCSR l_hat = cheby_operator(g);
  DenseMatrix dense_l = densify(l_hat);

  // isolate the T_2 term: W_0 = W_1 = 0, W_2 = I
  ModelConfig cfg = small_cfg(ModelKind::Cheby, 1, 3, 3, 3);
  cfg.cheby_order = 2;
  cfg.bias = false;
  Rng prng(8);
  Parameters p = init_parameters(cfg, prng);
  p.layers[0].weights[0] = DenseMatrix(3, 3);
  p.layers[0].weights[1] = DenseMatrix(3, 3);
  p.layers[0].weights[2] = DenseMatrix::identity(3);

  Tape t;
  Rng fwd(0);
  ForwardOutput out = cheby_forward(t, cfg, p, l_hat, g.features, fwd, false);

  DenseMatrix t2 = matmul(dense_l, dense_l);
  for (std::size_t i = 0; i < t2.data.size(); ++i) t2.data[i] *= 2.0;
  for (int i = 0; i < 5; ++i) t2(i, i) -= 1.0;
  DenseMatrix want = matmul(t2, g.features);
  for (std::size_t i = 0; i < want.data.size(); ++i)
    CHECK(t.value(out.logits).data[i] == Catch::Approx(want.data[i]).margin(1e-12));
}

TEST_CASE("edgeless cheby operator negates features") {
  Rng rng(23);
  Graph g = erdos_renyi_graph(4, 0.0, rng, 2);
  for (double& v : g.features.data) v = rng.normal();
  SparseCSR l_hat = cheby_operator(g);

  ModelConfig cfg = small_cfg(ModelKind::Cheby, 1, 2, 2, 2);
  cfg.cheby_order = 1;
  cfg.bias = false;
  Rng prng(8);
  Parameters p = init_parameters(cfg, prng);
  p.layers[0].weights[0] = DenseMatrix(2, 2);
  p.layers[0].weights[1] = DenseMatrix::identity(2);

  Tape t;
  Rng fwd(0);
  ForwardOutput out = cheby_forward(t, cfg, p, l_hat, g.features, fwd, false);
  for (std::size_t i = 0; i < g.features.data.size(); ++i)
    CHECK(t.value(out.logits).data[i] == -g.features.data[i]);
}

TEST_CASE("pairnorm fixed point, centering, scale") {
  Tape t;
  DenseMatrix h(4, 2);
  h(0, 0) = 1;  h(0, 1) = 1;
  h(1, 0) = -1; h(1, 1) = -1;
  h(2, 0) = 1;  h(2, 1) = -1;
  h(3, 0) = -1; h(3, 1) = 1;
  Var out = pairnorm(t, t.leaf(h), std::sqrt(2.0));
  for (std::size_t i = 0; i < h.data.size(); ++i)
    CHECK(t.value(out).data[i] == Catch::Approx(h.data[i]).margin(1e-10));

  Rng rng(29);
  DenseMatrix r = testutil::gaussian_matrix(12, 5, rng);
  const double s = 1.7;
  Var pn = pairnorm(t, t.leaf(r), s);
  const DenseMatrix& v = t.value(pn);
  for (int j = 0; j < v.cols; ++j) {
    double mean = 0.0;
    for (int i = 0; i < v.rows; ++i) mean += v(i, j);
    CHECK(std::abs(mean / v.rows) < 1e-10);
  }
  double msn = 0.0;
  for (double e : v.data) msn += e * e;
  msn /= v.rows;
  CHECK(msn == Catch::Approx(s * s).margin(1e-10));

  Var zeros = pairnorm(t, t.leaf(DenseMatrix(3, 2, 4.0)), 1.0);  // constant rows center to zero
  for (double e : t.value(zeros).data) CHECK(e == 0.0);
}

TEST_CASE("batchnorm training statistics and eval consistency") {
  Rng rng(31);
  DenseMatrix h = testutil::gaussian_matrix(40, 3, rng);
  for (int i = 0; i < h.rows; ++i) {
    h(i, 0) = 10.0 * h(i, 0) + 3.0;
    h(i, 1) = 25.0 * h(i, 1) - 7.0;
    h(i, 2) = 2.0;  // constant column
  }
  ModelConfig cfg = small_cfg(ModelKind::Mlp, 2, 3, 3, 2);
  cfg.norm = NormKind::Batch;
  Rng prng(1);
  Parameters p = init_parameters(cfg, prng);
  LayerParams& lp = p.layers[0];

  Tape t;
  std::vector<BoundParam> bound;
  Var out = batchnorm(t, t.leaf(h), lp, true, bound);
  const DenseMatrix& v = t.value(out);
  for (int j = 0; j < 2; ++j) {
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < v.rows; ++i) mean += v(i, j);
    mean /= v.rows;
    for (int i = 0; i < v.rows; ++i) var += (v(i, j) - mean) * (v(i, j) - mean);
    var /= v.rows;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(var == Catch::Approx(1.0).margin(1e-6));
  }
  for (int i = 0; i < v.rows; ++i) CHECK(v(i, 2) == 0.0);  // floored variance

  // eval standardizes with the stored running statistics
  lp.bn_gamma(0, 0) = 1.25;
  lp.bn_beta(0, 0) = -0.5;
  Tape te;
  std::vector<BoundParam> bound2;
  Var eval_out = batchnorm(te, te.leaf(h), lp, false, bound2);
  for (int i = 0; i < h.rows; ++i)
    for (int j = 0; j < h.cols; ++j) {
      double xhat = (h(i, j) - lp.bn_running_mean(0, j)) /
                    std::sqrt(lp.bn_running_var(0, j) + kBatchNormEps);
      double want = lp.bn_gamma(0, j) * xhat + lp.bn_beta(0, j);
      CHECK(te.value(eval_out)(i, j) == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("hidden list length and shapes") {
  Graph g = testutil::tiny_graph();
  SparseCSR a_hat = normalize_adjacency(g);
  for (int k : {1, 2, 5}) {
    ModelConfig cfg = small_cfg(ModelKind::Gcn, k, 7, 4, 2);
    Rng rng(41);
    Parameters p = init_parameters(cfg, rng);
    Tape t;
    Rng fwd(1);
    ForwardOutput out = gcn_forward(t, cfg, p, a_hat, g.features, fwd, false);
    CHECK(out.hidden.size() == static_cast<std::size_t>(k - 1));
    for (Var h : out.hidden) {
      CHECK(h.rows == g.n);
      CHECK(h.cols == 7);
    }
    CHECK(out.logits.rows == g.n);
    CHECK(out.logits.cols == 2);
  }
}

TEST_CASE("residual skips apply only when widths match") {
  Graph g = testutil::tiny_graph();
  SparseCSR eye = SparseCSR::identity(g.n);
  ModelConfig cfg = small_cfg(ModelKind::Gcn, 2, 4, 4, 2);
  cfg.residual = true;
  cfg.bias = false;
  Rng rng(43);
  Parameters p = init_parameters(cfg, rng);

  Tape t;
  Rng fwd(0);
  ForwardOutput out = gcn_forward(t, cfg, p, eye, g.features, fwd, false);
  // layer 1: widths match (4 -> 4) so input is added before the activation
  DenseMatrix pre = matmul(g.features, p.layers[0].weights[0]);
  for (std::size_t i = 0; i < pre.data.size(); ++i)
    pre.data[i] = std::max(0.0, pre.data[i] + g.features.data[i]);
  CHECK(t.value(out.hidden[0]).data == pre.data);
  // layer 2: widths differ (4 -> 2) so no skip; shape check suffices
  CHECK(out.logits.cols == 2);
}

TEST_CASE("deep untrained gcn increases dimension correlation") {
  Rng rng(47);
  SbmParams sp;
  sp.block_sizes = {150, 150, 150};
  sp.p_in = 0.05;
  sp.p_out = 0.005;
  sp.feature_dim = 32;
  auto [g, split] = sbm_graph(sp, rng);
  SparseCSR a_hat = normalize_adjacency(g);

  ModelConfig cfg = small_cfg(ModelKind::Gcn, 30, 32, 32, 32);
  Rng prng(0);
  Parameters p = init_parameters(cfg, prng);
  Tape t;
  Rng fwd(0);
  ForwardOutput out = gcn_forward(t, cfg, p, a_hat, g.features, fwd, false);
  auto corr_in = corr_metric(g.features);
  auto corr_out = corr_metric(t.value(out.logits));
  REQUIRE(corr_in.has_value());
  REQUIRE(corr_out.has_value());
  CHECK(*corr_out > *corr_in);
}
