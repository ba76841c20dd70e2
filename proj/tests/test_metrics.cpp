#include <catch2/catch_amalgamated.hpp>

#include "decorr/metrics.hpp"
#include "decorr/studies.hpp"
#include "test_util.hpp"

using namespace decorr;

namespace {

DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  DenseMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

// the counter-example matrix with perfectly correlated columns but clearly
// separated rows
DenseMatrix counter_example() { return from_rows({{1, 0}, {-0.1, 1.1}}); }

// mean |pearson| over all column pairs, straight from the pairwise definition
std::optional<double> corr_pairwise_oracle(const DenseMatrix& x) {
  std::vector<std::vector<double>> cols(x.cols, std::vector<double>(x.rows));
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) cols[j][i] = x(i, j);
  double acc = 0.0;
  int pairs = 0;
  int usable = 0;
  std::vector<char> ok(x.cols, 1);
  for (int j = 0; j < x.cols; ++j) {
    double m = 0;
    for (double v : cols[j]) m += v;
    m /= x.rows;
    double n2 = 0;
    for (double v : cols[j]) n2 += (v - m) * (v - m);
    ok[j] = std::sqrt(n2) > kMetricEps;
    usable += ok[j];
  }
  if (usable < 2) return std::nullopt;
  for (int i = 0; i < x.cols; ++i)
    for (int j = i + 1; j < x.cols; ++j) {
      if (!ok[i] || !ok[j]) continue;
      acc += std::abs(*pearson(cols[i], cols[j]));
      ++pairs;
    }
  return acc / pairs;
}

}  // namespace

TEST_CASE("pearson examples") {
  std::vector<double> x{1, 2, 3};
  CHECK(*pearson(x, std::vector<double>{1, 2, 3}) == Catch::Approx(1.0).margin(1e-12));
  CHECK(*pearson(x, std::vector<double>{3, 2, 1}) == Catch::Approx(-1.0).margin(1e-12));
  CHECK(*pearson(x, std::vector<double>{1, 3, 2}) == Catch::Approx(0.5).margin(1e-12));
  CHECK_FALSE(pearson(x, std::vector<double>{4, 4, 4}).has_value());
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}),
                  std::invalid_argument);
}

TEST_CASE("pearson properties") {
  Rng rng(61);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
    }
    double r = *pearson(x, y);
    CHECK(std::abs(r) <= 1.0);
    double a = rng.uniform(-3, 3);
    if (std::abs(a) < 0.1) a = 0.5;
    double b = rng.uniform(-5, 5);
    std::vector<double> affine(20);
    for (int i = 0; i < 20; ++i) affine[i] = a * x[i] + b;
    CHECK(*pearson(x, affine) == Catch::Approx(a > 0 ? 1.0 : -1.0).margin(1e-10));
  }
}

TEST_CASE("corr_metric examples") {
  CHECK(*corr_metric(from_rows({{1, 2}, {2, 4}, {3, 6}})) == Catch::Approx(1.0).margin(1e-12));
  CHECK(*corr_metric(counter_example()) == Catch::Approx(1.0).margin(1e-12));

  // independent Gaussian columns have near-zero mean |pearson|
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    CHECK(*corr_metric(testutil::gaussian_matrix(100, 10, rng)) < 0.2);
  }

  CorrResult with_const = corr_metric_detail(from_rows({{1, 5, 1}, {2, 5, 2}, {3, 5, 9}}));
  CHECK(with_const.excluded_dims == 1);
  CHECK_FALSE(corr_metric(from_rows({{1, 2}, {1, 2}})).has_value());
}

TEST_CASE("corr_metric equals the pairwise oracle") {
  Rng rng(67);
  for (int rep = 0; rep < 25; ++rep) {
    DenseMatrix x = testutil::gaussian_matrix(3 + static_cast<int>(rng.below(40)),
                                              2 + static_cast<int>(rng.below(8)), rng);
    if (rep % 3 == 0)
      for (int i = 0; i < x.rows; ++i) x(i, 0) = 2.5;  // throw in a constant column
    auto fast = corr_metric(x);
    auto slow = corr_pairwise_oracle(x);
    REQUIRE(fast.has_value() == slow.has_value());
    if (fast) CHECK(*fast == Catch::Approx(*slow).margin(1e-12));
  }
}

TEST_CASE("corr_metric invariances") {
  Rng rng(71);
  DenseMatrix x = testutil::gaussian_matrix(30, 6, rng);
  double base = *corr_metric(x);

  DenseMatrix affine = x;
  for (int j = 0; j < x.cols; ++j) {
    double a = rng.uniform(0.2, 3.0) * (rng.bernoulli(0.5) ? 1 : -1);
    double b = rng.uniform(-4, 4);
    for (int i = 0; i < x.rows; ++i) affine(i, j) = a * x(i, j) + b;
  }
  CHECK(*corr_metric(affine) == Catch::Approx(base).margin(1e-10));

  std::vector<int> perm = rng.permutation(x.rows);
  DenseMatrix shuffled(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) shuffled(i, j) = x(perm[i], j);
  CHECK(*corr_metric(shuffled) == Catch::Approx(base).margin(1e-10));
}

TEST_CASE("rank-1 matrices with non-constant columns have corr 1") {
  Rng rng(73);
  for (int rep = 0; rep < 100; ++rep) {
    int n = 3 + static_cast<int>(rng.below(48));
    int d = 2 + static_cast<int>(rng.below(19));
    std::vector<double> u(n), v(d);
    for (double& e : u) e = rng.normal();
    for (double& e : v) e = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.5, 1.5);
    DenseMatrix x(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) x(i, j) = u[i] * v[j];
    auto corr = corr_metric(x);
    REQUIRE(corr.has_value());
    CHECK(*corr == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("normalized euclidean examples") {
  std::vector<double> x{1, 0};
  CHECK(*normalized_euclidean(x, x) == Catch::Approx(0.0).margin(1e-15));
  CHECK(*normalized_euclidean(x, std::vector<double>{-1, 0}) ==
        Catch::Approx(1.0).margin(1e-12));
  CHECK(*normalized_euclidean(x, std::vector<double>{-0.1, 1.1}) ==
        Catch::Approx(0.738).margin(5e-4));
  CHECK_FALSE(normalized_euclidean(x, std::vector<double>{0, 0}).has_value());
}

TEST_CASE("smv examples") {
  DenseMatrix same = from_rows({{1, 2}, {1, 2}, {1, 2}});
  CHECK(*smv(same) == Catch::Approx(0.0).margin(1e-12));

  CHECK(*smv(counter_example()) == Catch::Approx(0.738).margin(5e-4));

  DenseMatrix basis = DenseMatrix::identity(3);
  CHECK(*smv(basis) == Catch::Approx(0.5 * std::sqrt(2.0)).margin(1e-12));

  SmvResult with_zero = smv_detail(from_rows({{0, 0}, {1, 2}, {3, 4}}));
  CHECK(with_zero.excluded_rows == 1);
  CHECK_FALSE(smv(from_rows({{0, 0}, {0, 0}, {1, 1}})).has_value());
}

TEST_CASE("counter-example separates the two metrics") {
  // fully correlated dimensions yet far-apart rows
  MetricReport rep = metric_report(counter_example());
  REQUIRE(rep.corr.has_value());
  REQUIRE(rep.smv.has_value());
  CHECK(*rep.corr == Catch::Approx(1.0).margin(1e-12));
  CHECK(*rep.smv == Catch::Approx(0.738).margin(5e-4));
  CHECK(*rep.smv > 0.0);
}

TEST_CASE("smv invariances and range") {
  Rng rng(79);
  DenseMatrix x = testutil::gaussian_matrix(25, 5, rng);
  double base = *smv(x);
  CHECK(base >= 0.0);
  CHECK(base <= 1.0);

  DenseMatrix scaled = x;
  for (int i = 0; i < x.rows; ++i) {
    double s = rng.uniform(0.1, 5.0);
    for (int j = 0; j < x.cols; ++j) scaled(i, j) = s * x(i, j);
  }
  CHECK(*smv(scaled) == Catch::Approx(base).margin(1e-10));

  std::vector<int> perm = rng.permutation(x.rows);
  DenseMatrix shuffled(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) shuffled(i, j) = x(perm[i], j);
  CHECK(*smv(shuffled) == Catch::Approx(base).margin(1e-10));

  for (int rep = 0; rep < 20; ++rep) {
    DenseMatrix r = testutil::gaussian_matrix(10, 4, rng);
    CHECK(*corr_metric(r) >= 0.0);
    CHECK(*corr_metric(r) <= 1.0);
    CHECK(*smv(r) >= 0.0);
    CHECK(*smv(r) <= 1.0);
  }
}

TEST_CASE("propagation study trends on a small graph") {
  Rng graph_rng(83);
  Graph g = erdos_renyi_graph(300, 0.03, graph_rng);
  Rng rng(5);
  StudySeries s = propagation_study(g, 30, 20, 5, rng, "full", false);
  REQUIRE(s.points.size() == 21);
  CHECK(s.points[0].corr_mean < 0.15);             // fresh Gaussian features
  CHECK(s.points[20].corr_mean > s.points[1].corr_mean);

  // edgeless graph: propagation is the identity, Corr stays put
  Graph empty = erdos_renyi_graph(100, 0.0, graph_rng);
  Rng rng2(5);
  StudySeries flat = propagation_study(empty, 20, 5, 3, rng2, "full", false);
  for (const StudyPoint& p : flat.points)
    CHECK(p.corr_mean == Catch::Approx(flat.points[0].corr_mean).margin(1e-12));
}

TEST_CASE("transformation study trends") {
  Rng rng(89);
  StudySeries relu = transformation_study(400, 40, 16, 12, 5, true, rng, false);
  CHECK(relu.points[0].corr_mean < 0.15);
  CHECK(relu.points[12].corr_mean > relu.points[1].corr_mean);

  // width-1 bottleneck makes every readout dimension proportional; the
  // linear variant keeps the representation alive at any depth
  Rng rng2(97);
  StudySeries narrow = transformation_study(50, 10, 1, 3, 2, false, rng2, false);
  for (std::size_t k = 1; k < narrow.points.size(); ++k)
    CHECK(narrow.points[k].corr_mean == Catch::Approx(1.0).margin(1e-9));

  Rng rng3(98);
  StudySeries narrow_relu = transformation_study(50, 10, 1, 1, 2, true, rng3, false);
  CHECK(narrow_relu.points[1].corr_mean == Catch::Approx(1.0).margin(1e-9));
}
