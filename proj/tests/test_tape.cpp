#include <catch2/catch_amalgamated.hpp>

#include "decorr/tape.hpp"
#include "test_util.hpp"

using namespace decorr;
using testutil::max_fd_rel_error;
using testutil::random_matrix;
using testutil::weighted_sum;

namespace {

DenseMatrix triple_loop_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

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

}  // namespace

TEST_CASE("matmul basics") {
  Tape t;
  Var id = t.leaf(DenseMatrix::identity(2));
  Var b = t.leaf(from_rows({{3, 4}, {5, 6}}));
  Var prod = t.matmul(id, b);
  CHECK(t.value(prod).data == t.value(b).data);

  Var row = t.leaf(from_rows({{1, 2}}));
  Var col = t.leaf(from_rows({{3}, {4}}));
  CHECK(t.scalar(t.matmul(row, col)) == 11.0);

  CHECK_THROWS_AS(t.matmul(row, row), std::invalid_argument);
}

TEST_CASE("matmul matches a triple-loop oracle") {
  Rng rng(42);
  DenseMatrix a = random_matrix(3, 4, rng);
  DenseMatrix b = random_matrix(4, 2, rng);
  Tape t;
  DenseMatrix got = t.value(t.matmul(t.leaf(a), t.leaf(b)));
  DenseMatrix want = triple_loop_matmul(a, b);
  for (std::size_t i = 0; i < want.data.size(); ++i)
    CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-14));
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    DenseMatrix a = random_matrix(3, 3, rng);
    DenseMatrix b = random_matrix(3, 3, rng);
    DenseMatrix c = random_matrix(3, 3, rng);
    DenseMatrix left = matmul(matmul(a, b), c);
    DenseMatrix right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.data.size(); ++i)
      CHECK(left.data[i] == Catch::Approx(right.data[i]).margin(1e-10));
  }
}

TEST_CASE("spmm identity and hand case") {
  Tape t;
  SparseCSR id = SparseCSR::identity(3);
  Rng rng(3);
  DenseMatrix d = random_matrix(3, 5, rng);
  CHECK(t.value(t.spmm(id, t.leaf(d))).data == d.data);

  // two-node complete propagation operator times the identity features
  SparseCSR half = SparseCSR::from_triplets(
      2, 2, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}});
  DenseMatrix out = t.value(t.spmm(half, t.leaf(DenseMatrix::identity(2))));
  for (double v : out.data) CHECK(v == 0.5);
}

TEST_CASE("spmm equals densified matmul") {
  Rng rng(11);
  std::vector<std::tuple<int, int, double>> trip;
  for (int k = 0; k < 8; ++k) {
    int i = static_cast<int>(rng.below(5));
    int j = static_cast<int>(rng.below(5));
    bool dup = false;
    for (auto& [a, b, v] : trip) dup = dup || (a == i && b == j);
    if (dup) {
      --k;
      continue;
    }
    trip.emplace_back(i, j, rng.uniform(-2, 2));
  }
  SparseCSR s = SparseCSR::from_triplets(5, 5, trip);
  DenseMatrix d = random_matrix(5, 3, rng);
  Tape t;
  DenseMatrix got = t.value(t.spmm(s, t.leaf(d)));
  DenseMatrix want = triple_loop_matmul(densify(s), d);
  for (std::size_t i = 0; i < want.data.size(); ++i)
    CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-12));
}

TEST_CASE("elementwise examples") {
  Tape t;
  Var r = t.relu(t.leaf(from_rows({{-1, 2}})));
  CHECK(t.value(r)(0, 0) == 0.0);
  CHECK(t.value(r)(0, 1) == 2.0);

  CHECK(t.scalar(t.sigmoid(t.leaf(from_rows({{0}})))) == 0.5);

  Rng rng(9);
  DenseMatrix a = random_matrix(3, 3, rng);
  Var av = t.leaf(a);
  Var sum = t.add(av, t.scale(av, -1.0));
  for (double v : t.value(sum).data) CHECK(v == 0.0);

  CHECK_THROWS_AS(t.add(t.leaf(a), t.leaf(random_matrix(2, 2, rng))), std::invalid_argument);
}

TEST_CASE("softmax cross entropy values") {
  Tape t;
  std::vector<int> labels{0};
  std::vector<int> mask{0};
  CHECK(t.scalar(t.softmax_cross_entropy(t.leaf(from_rows({{0, 0}})), labels, mask)) ==
        Catch::Approx(std::log(2.0)).epsilon(1e-12));

  double stable = t.scalar(t.softmax_cross_entropy(t.leaf(from_rows({{1000, 0}})), labels, mask));
  CHECK(std::isfinite(stable));
  CHECK(stable == Catch::Approx(0.0).margin(1e-12));

  // direct-formula oracle on random logits, accumulated in long double
  Rng rng(21);
  DenseMatrix z = random_matrix(4, 3, rng, -3, 3);
  std::vector<int> labels4{2, 0, 1, 2};
  std::vector<int> mask4{0, 1, 2, 3};
  long double want = 0.0L;
  for (int i = 0; i < 4; ++i) {
    long double denom = 0.0L;
    for (int j = 0; j < 3; ++j) denom += expl(static_cast<long double>(z(i, j)));
    want += -logl(expl(static_cast<long double>(z(i, labels4[i]))) / denom);
  }
  want /= 4.0L;
  double got = t.scalar(t.softmax_cross_entropy(t.leaf(z), labels4, mask4));
  CHECK(got == Catch::Approx(static_cast<double>(want)).epsilon(1e-12));

  CHECK_THROWS_AS(t.softmax_cross_entropy(t.leaf(z), labels4, {}), std::invalid_argument);
  CHECK_THROWS_AS(t.softmax_cross_entropy(t.leaf(z), {5, 0, 1, 2}, mask4),
                  std::invalid_argument);
}

TEST_CASE("softmax cross entropy is nonnegative and shift invariant") {
  Rng rng(31);
  for (int rep = 0; rep < 25; ++rep) {
    DenseMatrix z = random_matrix(5, 4, rng, -4, 4);
    std::vector<int> labels{0, 1, 2, 3, 1};
    std::vector<int> mask{0, 1, 2, 3, 4};
    Tape t;
    double base = t.scalar(t.softmax_cross_entropy(t.leaf(z), labels, mask));
    CHECK(base >= 0.0);
    DenseMatrix shifted = z;
    const double c = rng.uniform(-10, 10);
    for (int i = 0; i < z.rows; ++i)
      for (int j = 0; j < z.cols; ++j) shifted(i, j) += c;
    double moved = t.scalar(t.softmax_cross_entropy(t.leaf(shifted), labels, mask));
    CHECK(moved == Catch::Approx(base).margin(1e-10));
  }
}

TEST_CASE("dropout contract") {
  Tape t;
  Rng rng(4);
  DenseMatrix x = random_matrix(4, 4, rng);
  Var xv = t.leaf(x);
  CHECK(t.dropout(xv, 0.0, rng, true).id == xv.id);
  CHECK(t.dropout(xv, 0.5, rng, false).id == xv.id);
  CHECK_THROWS_AS(t.dropout(xv, 1.0, rng, true), std::invalid_argument);
  CHECK_THROWS_AS(t.dropout(xv, -0.1, rng, true), std::invalid_argument);

  DenseMatrix ones(1000, 10, 1.0);
  Var dv = t.dropout(t.leaf(ones), 0.6, rng, true);
  double mean = 0.0;
  for (double v : t.value(dv).data) mean += v;
  mean /= static_cast<double>(ones.data.size());
  CHECK(mean > 0.95);
  CHECK(mean < 1.05);
}

TEST_CASE("backward basics") {
  Tape t;
  Rng rng(13);
  DenseMatrix w0 = random_matrix(2, 2, rng);
  Var w = t.leaf(w0);
  t.backward(t.sum(w));
  for (double v : t.grad(w).data) CHECK(v == 1.0);

  Tape t2;
  Var w2 = t2.leaf(w0);
  t2.backward(t2.sum(t2.mul(w2, w2)));
  for (std::size_t i = 0; i < w0.data.size(); ++i)
    CHECK(t2.grad(w2).data[i] == Catch::Approx(2.0 * w0.data[i]).epsilon(1e-12));

  Tape t3;
  Var a = t3.leaf(w0);
  CHECK_THROWS_AS(t3.backward(a), std::invalid_argument);  // not scalar
  Tape t4;
  CHECK_THROWS_AS(t4.backward(Var{5, 1, 1}), std::invalid_argument);  // not on tape
}

TEST_CASE("gradients accumulate over multiple consumers") {
  // f = sum(x) + 2 sum(x) through two separate consumers of the same node
  Tape t;
  DenseMatrix x0(2, 2, 1.5);
  Var x = t.leaf(x0);
  Var loss = t.add(t.sum(x), t.scale(t.sum(x), 2.0));
  t.backward(loss);
  for (double v : t.grad(x).data) CHECK(v == 3.0);
}

TEST_CASE("finite differences validate every operation") {
  Rng rng(101);
  DenseMatrix x0 = random_matrix(4, 3, rng, 0.2, 1.8);  // positive, away from kinks
  DenseMatrix other = random_matrix(4, 3, rng, 0.2, 1.8);
  DenseMatrix square = random_matrix(3, 3, rng, 0.2, 1.8);
  DenseMatrix rowvec = random_matrix(1, 3, rng, 0.5, 1.5);
  SparseCSR sp = SparseCSR::from_triplets(
      4, 4, {{0, 1, 0.7}, {1, 0, 0.7}, {1, 2, -0.4}, {2, 3, 1.1}, {3, 3, 0.5}});

  auto check = [&](const char* name, const DenseMatrix& input,
                   std::function<Var(Tape&, Var)> build) {
    INFO(name);
    CHECK(max_fd_rel_error(input, build) < 1e-4);
  };

  check("matmul lhs", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.matmul(x, t.constant(transpose(other))));
  });
  check("matmul rhs", square, [&](Tape& t, Var x) {
    return weighted_sum(t, t.matmul(t.constant(square), x));
  });
  check("spmm", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.spmm(sp, x)); });
  check("gram", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.gram(x)); });
  check("add", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.add(x, t.constant(other)));
  });
  check("sub both sides", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.sub(t.sub(x, t.constant(other)), x));
  });
  check("mul", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.mul(x, t.constant(other)));
  });
  check("mul self", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.mul(x, x)); });
  check("scale/add_const", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.add_const(t.scale(x, -2.5), 0.75));
  });
  check("relu", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.relu(t.add_const(x, -1.0)));
  });
  check("sigmoid", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.sigmoid(x)); });
  check("sqrt", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.sqrt_(x)); });
  check("exp", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.exp_(x)); });
  check("log", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.log_(x)); });
  check("gather_rows", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.gather_rows(x, {2, 0, 2}));
  });
  check("col_sum", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.col_sum(x)); });
  check("row_sum", x0, [&](Tape& t, Var x) { return weighted_sum(t, t.row_sum(x)); });
  check("add_rowvec matrix", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.add_rowvec(x, t.constant(rowvec)));
  });
  check("add_rowvec vector", rowvec, [&](Tape& t, Var v) {
    return weighted_sum(t, t.add_rowvec(t.constant(x0), v));
  });
  check("mul_rowvec", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.mul_rowvec(x, t.constant(rowvec)));
  });
  check("mul_rowvec vector", rowvec, [&](Tape& t, Var v) {
    return weighted_sum(t, t.mul_rowvec(t.constant(x0), v));
  });
  check("div_rowvec", x0, [&](Tape& t, Var x) {
    return weighted_sum(t, t.div_rowvec(x, t.constant(rowvec)));
  });
  check("div_rowvec vector", rowvec, [&](Tape& t, Var v) {
    return weighted_sum(t, t.div_rowvec(t.constant(x0), v));
  });
  check("div_by_scalar", x0, [&](Tape& t, Var x) {
    Var denom = t.add_const(t.sum(t.mul(x, x)), 0.5);
    return weighted_sum(t, t.div_by_scalar(x, denom));
  });
  check("logmeanexp", x0, [&](Tape& t, Var x) { return t.logmeanexp(x); });
  check("dropout", x0, [&](Tape& t, Var x) {
    Rng drop_rng(77);
    return weighted_sum(t, t.dropout(x, 0.4, drop_rng, true));
  });
  check("softmax_cross_entropy", x0, [&](Tape& t, Var x) {
    return t.softmax_cross_entropy(x, {0, 2, 1, 0}, {0, 1, 3});
  });
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Rng rng(55);
    Tape t;
    Var x = t.leaf(testutil::gaussian_matrix(6, 5, rng));
    Var w = t.leaf(testutil::gaussian_matrix(5, 4, rng));
    Var h = t.relu(t.matmul(t.dropout(x, 0.3, rng, true), w));
    Var loss = t.softmax_cross_entropy(h, {0, 1, 2, 3, 0, 1}, {0, 2, 4});
    t.backward(loss);
    std::vector<double> out = t.value(h).data;
    const auto& g = t.grad(w).data;
    out.insert(out.end(), g.begin(), g.end());
    out.push_back(t.scalar(loss));
    return out;
  };
  CHECK(run() == run());
}
