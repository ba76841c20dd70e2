#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "decorr/matrix.hpp"
#include "decorr/rng.hpp"

namespace decorr {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  int rows = 0;
  int cols = 0;
};

/// Define-by-run reverse-mode differentiation over matrix operations.
///
/// Every operation records its forward value and a pull rule that adds the
/// operand contributions of the upstream gradient. Nodes are stored in
/// creation order, which is a topological order of the computation, so one
/// reverse sweep visits each node exactly once. Gradients accumulate by plain
/// summation in operation order; a tape is built fresh for each forward pass
/// and confined to a single run.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(DenseMatrix v) { return push(std::move(v), nullptr); }

  Var constant(DenseMatrix v) { return push(std::move(v), nullptr); }

  const DenseMatrix& value(Var x) const { return nodes_[check(x)].value; }
  const DenseMatrix& grad(Var x) const { return nodes_[check(x)].grad; }

  double scalar(Var x) const {
    const DenseMatrix& v = value(x);
    require(v.rows == 1 && v.cols == 1, "scalar(): node is not 1x1");
    return v(0, 0);
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    binary_shape_check(a, b, "add");
    DenseMatrix out = value(a);
    const DenseMatrix& bv = value(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), [ai = a.id, bi = b.id](Tape& t, const DenseMatrix& up) {
      t.accumulate(ai, up);
      t.accumulate(bi, up);
    });
  }

  Var sub(Var a, Var b) {
    binary_shape_check(a, b, "sub");
    DenseMatrix out = value(a);
    const DenseMatrix& bv = value(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
    return push(std::move(out), [ai = a.id, bi = b.id](Tape& t, const DenseMatrix& up) {
      t.accumulate(ai, up);
      DenseMatrix& g = t.nodes_[bi].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i) g.data[i] -= up.data[i];
    });
  }

  Var mul(Var a, Var b) {
    binary_shape_check(a, b, "mul");
    DenseMatrix out = value(a);
    const DenseMatrix& bv = value(b);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
    return push(std::move(out), [ai = a.id, bi = b.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      const DenseMatrix& bv2 = t.nodes_[bi].value;
      DenseMatrix& ga = t.nodes_[ai].grad;
      DenseMatrix& gb = t.nodes_[bi].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i) {
        ga.data[i] += up.data[i] * bv2.data[i];
        gb.data[i] += up.data[i] * av.data[i];
      }
    });
  }

  Var scale(Var a, double c) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v *= c;
    return push(std::move(out), [ai = a.id, c](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i) g.data[i] += c * up.data[i];
    });
  }

  Var add_const(Var a, double c) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v += c;
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      t.accumulate(ai, up);
    });
  }

  Var relu(Var a) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        if (av.data[i] > 0.0) g.data[i] += up.data[i];
    });
  }

  Var sigmoid(Var a) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].pull = [ai = a.id, ri = r.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& s = t.nodes_[ri].value;
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        g.data[i] += up.data[i] * s.data[i] * (1.0 - s.data[i]);
    };
    return r;
  }

  Var sqrt_(Var a) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v = std::sqrt(v);
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].pull = [ai = a.id, ri = r.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& s = t.nodes_[ri].value;
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        g.data[i] += up.data[i] / (2.0 * s.data[i]);
    };
    return r;
  }

  Var exp_(Var a) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v = std::exp(v);
    Var r = push(std::move(out), nullptr);
    nodes_[r.id].pull = [ai = a.id, ri = r.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& s = t.nodes_[ri].value;
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        g.data[i] += up.data[i] * s.data[i];
    };
    return r;
  }

  Var log_(Var a) {
    DenseMatrix out = value(a);
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        g.data[i] += up.data[i] / av.data[i];
    });
  }

  // ---- products ----

  Var matmul(Var a, Var b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    DenseMatrix out = decorr::matmul(value(a), value(b));
    return push(std::move(out), [ai = a.id, bi = b.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      const DenseMatrix& bv = t.nodes_[bi].value;
      eigen_view(t.nodes_[ai].grad).noalias() += eigen_view(up) * eigen_view(bv).transpose();
      eigen_view(t.nodes_[bi].grad).noalias() += eigen_view(av).transpose() * eigen_view(up);
    });
  }

  /// Product of a constant sparse operator and a dense variable. The sparse
  /// matrix is captured by pointer and must outlive the tape; its transpose
  /// is built lazily on the first backward pass.
  Var spmm(const SparseCSR& s, Var d) {
    require(s.cols == d.rows, "spmm: inner dimensions differ");
    DenseMatrix out = decorr::spmm(s, value(d));
    auto tcache = std::make_shared<std::optional<SparseCSR>>();
    return push(std::move(out),
                [sp = &s, di = d.id, tcache](Tape& t, const DenseMatrix& up) {
                  if (!tcache->has_value()) *tcache = csr_transpose(*sp);
                  DenseMatrix delta = decorr::spmm(**tcache, up);
                  t.accumulate(di, delta);
                });
  }

  /// Centered-free Gram product a^T a.
  Var gram(Var a) {
    DenseMatrix out = matmul_tn(value(a), value(a));
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      // d<U, a^T a>/da = a (U + U^T)
      eigen_view(t.nodes_[ai].grad).noalias() +=
          eigen_view(av) * (eigen_view(up) + eigen_view(up).transpose());
    });
  }

  // ---- structure ----

  Var gather_rows(Var a, std::vector<int> idx) {
    const DenseMatrix& av = value(a);
    for (int i : idx) require(i >= 0 && i < av.rows, "gather_rows: index out of range");
    DenseMatrix out(static_cast<int>(idx.size()), av.cols);
    for (int r = 0; r < out.rows; ++r)
      for (int j = 0; j < av.cols; ++j) out(r, j) = av(idx[r], j);
    return push(std::move(out),
                [ai = a.id, idx = std::move(idx)](Tape& t, const DenseMatrix& up) {
                  DenseMatrix& g = t.nodes_[ai].grad;
                  for (int r = 0; r < up.rows; ++r)
                    for (int j = 0; j < up.cols; ++j) g(idx[r], j) += up(r, j);
                });
  }

  Var col_sum(Var a) {
    const DenseMatrix& av = value(a);
    DenseMatrix out(1, av.cols);
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < av.cols; ++j) out(0, j) += av(i, j);
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) g(i, j) += up(0, j);
    });
  }

  Var row_sum(Var a) {
    const DenseMatrix& av = value(a);
    DenseMatrix out(av.rows, 1);
    for (int i = 0; i < av.rows; ++i)
      for (int j = 0; j < av.cols; ++j) out(i, 0) += av(i, j);
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) g(i, j) += up(i, 0);
    });
  }

  Var sum(Var a) {
    const DenseMatrix& av = value(a);
    DenseMatrix out(1, 1);
    for (double v : av.data) out(0, 0) += v;
    return push(std::move(out), [ai = a.id](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (double& v : g.data) v += up(0, 0);
    });
  }

  // ---- row-vector broadcasts ----

  Var add_rowvec(Var a, Var v) {
    rowvec_shape_check(a, v, "add_rowvec");
    DenseMatrix out = value(a);
    const DenseMatrix& vv = value(v);
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out(i, j) += vv(0, j);
    return push(std::move(out), [ai = a.id, vi = v.id](Tape& t, const DenseMatrix& up) {
      t.accumulate(ai, up);
      DenseMatrix& gv = t.nodes_[vi].grad;
      for (int i = 0; i < up.rows; ++i)
        for (int j = 0; j < up.cols; ++j) gv(0, j) += up(i, j);
    });
  }

  Var mul_rowvec(Var a, Var v) {
    rowvec_shape_check(a, v, "mul_rowvec");
    DenseMatrix out = value(a);
    const DenseMatrix& vv = value(v);
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out(i, j) *= vv(0, j);
    return push(std::move(out), [ai = a.id, vi = v.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      const DenseMatrix& vv2 = t.nodes_[vi].value;
      DenseMatrix& ga = t.nodes_[ai].grad;
      DenseMatrix& gv = t.nodes_[vi].grad;
      for (int i = 0; i < up.rows; ++i)
        for (int j = 0; j < up.cols; ++j) {
          ga(i, j) += up(i, j) * vv2(0, j);
          gv(0, j) += up(i, j) * av(i, j);
        }
    });
  }

  Var div_rowvec(Var a, Var v) {
    rowvec_shape_check(a, v, "div_rowvec");
    DenseMatrix out = value(a);
    const DenseMatrix& vv = value(v);
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out(i, j) /= vv(0, j);
    return push(std::move(out), [ai = a.id, vi = v.id](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      const DenseMatrix& vv2 = t.nodes_[vi].value;
      DenseMatrix& ga = t.nodes_[ai].grad;
      DenseMatrix& gv = t.nodes_[vi].grad;
      for (int i = 0; i < up.rows; ++i)
        for (int j = 0; j < up.cols; ++j) {
          double inv = 1.0 / vv2(0, j);
          ga(i, j) += up(i, j) * inv;
          gv(0, j) -= up(i, j) * av(i, j) * inv * inv;
        }
    });
  }

  /// Divide a matrix by a 1x1 node.
  Var div_by_scalar(Var a, Var s) {
    require(s.rows == 1 && s.cols == 1, "div_by_scalar: divisor is not 1x1");
    const double sv = scalar(s);
    DenseMatrix out = value(a);
    for (double& v : out.data) v /= sv;
    return push(std::move(out), [ai = a.id, si = s.id, sv](Tape& t, const DenseMatrix& up) {
      const DenseMatrix& av = t.nodes_[ai].value;
      DenseMatrix& ga = t.nodes_[ai].grad;
      double dot = 0.0;
      for (std::size_t i = 0; i < up.data.size(); ++i) {
        ga.data[i] += up.data[i] / sv;
        dot += up.data[i] * av.data[i];
      }
      t.nodes_[si].grad(0, 0) -= dot / (sv * sv);
    });
  }

  // ---- randomness ----

  /// Inverted dropout: each entry is zeroed with probability p and survivors
  /// are scaled by 1/(1-p). In eval mode or at p=0 the input is returned
  /// unchanged (no node is recorded).
  Var dropout(Var a, double p, Rng& rng, bool training) {
    require(p >= 0.0 && p < 1.0, "dropout: p outside [0, 1)");
    if (!training || p == 0.0) return a;
    const DenseMatrix& av = value(a);
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(av.data.size());
    DenseMatrix out = av;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      double m = rng.uniform() < p ? 0.0 : keep_scale;
      (*mask)[i] = m;
      out.data[i] *= m;
    }
    return push(std::move(out), [ai = a.id, mask](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < up.data.size(); ++i)
        g.data[i] += up.data[i] * (*mask)[i];
    });
  }

  // ---- reductions with structure ----

  /// log(mean(exp(a))) over all entries, max-shifted.
  Var logmeanexp(Var a) {
    const DenseMatrix& av = value(a);
    require(!av.data.empty(), "logmeanexp: empty input");
    double m = av.data[0];
    for (double v : av.data) m = std::max(m, v);
    double acc = 0.0;
    for (double v : av.data) acc += std::exp(v - m);
    DenseMatrix out(1, 1);
    out(0, 0) = m + std::log(acc / static_cast<double>(av.data.size()));
    auto weights = std::make_shared<std::vector<double>>(av.data.size());
    for (std::size_t i = 0; i < av.data.size(); ++i)
      (*weights)[i] = std::exp(av.data[i] - m) / acc;
    return push(std::move(out), [ai = a.id, weights](Tape& t, const DenseMatrix& up) {
      DenseMatrix& g = t.nodes_[ai].grad;
      for (std::size_t i = 0; i < g.data.size(); ++i)
        g.data[i] += up(0, 0) * (*weights)[i];
    });
  }

  /// Mean over masked rows of -log softmax(logits)[label], max-shifted.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& labels,
                            const std::vector<int>& mask) {
    const DenseMatrix& z = value(logits);
    require(!mask.empty(), "softmax_cross_entropy: empty mask");
    require(static_cast<int>(labels.size()) == z.rows,
            "softmax_cross_entropy: labels/logits row mismatch");
    const int c = z.cols;
    auto probs = std::make_shared<DenseMatrix>(static_cast<int>(mask.size()), c);
    auto rows = std::make_shared<std::vector<int>>(mask);
    double total = 0.0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
      int i = mask[r];
      require(i >= 0 && i < z.rows, "softmax_cross_entropy: mask index out of range");
      int y = labels[i];
      require(y >= 0 && y < c, "softmax_cross_entropy: label out of class range");
      double zmax = z(i, 0);
      for (int j = 1; j < c; ++j) zmax = std::max(zmax, z(i, j));
      double denom = 0.0;
      for (int j = 0; j < c; ++j) denom += std::exp(z(i, j) - zmax);
      for (int j = 0; j < c; ++j)
        (*probs)(static_cast<int>(r), j) = std::exp(z(i, j) - zmax) / denom;
      total += std::log(denom) - (z(i, y) - zmax);
    }
    DenseMatrix out(1, 1);
    const double inv_m = 1.0 / static_cast<double>(mask.size());
    out(0, 0) = total * inv_m;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return push(std::move(out),
                [li = logits.id, probs, rows, lab, inv_m](Tape& t, const DenseMatrix& up) {
                  DenseMatrix& g = t.nodes_[li].grad;
                  const double u = up(0, 0) * inv_m;
                  for (std::size_t r = 0; r < rows->size(); ++r) {
                    int i = (*rows)[r];
                    for (int j = 0; j < g.cols; ++j)
                      g(i, j) += u * (*probs)(static_cast<int>(r), j);
                    g(i, (*lab)[i]) -= u;
                  }
                });
  }

  /// Seed the loss gradient with 1 and run one reverse sweep.
  void backward(Var loss) {
    require(loss.id >= 0 && loss.id < static_cast<int>(nodes_.size()),
            "backward: loss node not on tape");
    require(loss.rows == 1 && loss.cols == 1, "backward: loss is not scalar");
    nodes_[loss.id].grad(0, 0) += 1.0;
    for (int i = loss.id; i >= 0; --i)
      if (nodes_[i].pull) nodes_[i].pull(*this, nodes_[i].grad);
  }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    std::function<void(Tape&, const DenseMatrix&)> pull;
  };

  std::vector<Node> nodes_;

  Var push(DenseMatrix v, std::function<void(Tape&, const DenseMatrix&)> pull) {
    Var handle{static_cast<int>(nodes_.size()), v.rows, v.cols};
    Node n;
    n.grad = DenseMatrix(v.rows, v.cols);
    n.value = std::move(v);
    n.pull = std::move(pull);
    nodes_.push_back(std::move(n));
    return handle;
  }

  int check(Var x) const {
    require(x.id >= 0 && x.id < static_cast<int>(nodes_.size()), "var not on this tape");
    return x.id;
  }

  void accumulate(int id, const DenseMatrix& up) {
    DenseMatrix& g = nodes_[id].grad;
    for (std::size_t i = 0; i < up.data.size(); ++i) g.data[i] += up.data[i];
  }

  void binary_shape_check(Var a, Var b, const char* op) const {
    require(value(a).same_shape(value(b)), std::string(op) + ": shape mismatch");
  }

  void rowvec_shape_check(Var a, Var v, const char* op) const {
    require(value(v).rows == 1 && value(v).cols == value(a).cols,
            std::string(op) + ": row vector shape mismatch");
  }
};

}  // namespace decorr
