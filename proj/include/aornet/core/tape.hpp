#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "aornet/core/common.hpp"

namespace aornet::ad {

using aornet::Mat;

// Reverse-mode tape over dense double matrices. The graph is rebuilt every
// forward pass (sizes here are small enough that clarity wins over caching).
// Ops are free functions returning node ids; backward() runs the recorded
// closures in reverse order, then flushes parameter gradients into the sinks
// registered by param().
//
// Conventions:
//  * node ids index into nodes_ and stay valid for the life of the tape;
//  * closures capture the tape pointer and ids, never references into the
//    node vector (which reallocates);
//  * gradient buffers are allocated lazily, so forward-only evaluation never
//    pays for them, and nodes the loss does not reach are skipped.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int input(Mat v) { return push(std::move(v), false); }

  // Differentiable non-parameter leaf (e.g. probing gradients w.r.t. pixels).
  int leaf(Mat v) { return push(std::move(v), true); }

  int param(const Mat& w, Mat* grad_sink) {
    int id = push(w, true);
    sinks_.push_back({id, grad_sink});
    return id;
  }

  int push(Mat v, bool ng) {
    nodes_.push_back(Node{std::move(v), Mat(), ng, {}});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int id, std::function<void()> bw) { nodes_[id].bw = std::move(bw); }

  const Mat& val(int id) const { return nodes_[id].v; }
  bool needs_grad(int id) const { return nodes_[id].ng; }

  Mat& grad(int id) {
    Node& n = nodes_[id];
    if (n.g.size() == 0) n.g = Mat::Zero(n.v.rows(), n.v.cols());
    return n.g;
  }

  // True once some downstream op has deposited gradient here.
  bool grad_reached(int id) const { return nodes_[id].g.size() != 0; }

  void backward(int loss_id) {
    require(val(loss_id).rows() == 1 && val(loss_id).cols() == 1,
            "backward: loss must be a 1x1 node");
    grad(loss_id)(0, 0) = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.bw && n.g.size() != 0) n.bw();
    }
    for (const auto& [id, sink] : sinks_) {
      if (sink && nodes_[id].g.size() != 0) *sink += nodes_[id].g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat v;
    Mat g;
    bool ng;
    std::function<void()> bw;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Mat*>> sinks_;
};

// ---- arithmetic -----------------------------------------------------------

inline int add(Tape& t, int a, int b) {
  int id = t.push(t.val(a) + t.val(b), t.needs_grad(a) || t.needs_grad(b));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, b, id] {
      if (t.needs_grad(a)) t.grad(a) += t.grad(id);
      if (t.needs_grad(b)) t.grad(b) += t.grad(id);
    });
  return id;
}

inline int sub(Tape& t, int a, int b) {
  int id = t.push(t.val(a) - t.val(b), t.needs_grad(a) || t.needs_grad(b));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, b, id] {
      if (t.needs_grad(a)) t.grad(a) += t.grad(id);
      if (t.needs_grad(b)) t.grad(b) -= t.grad(id);
    });
  return id;
}

inline int scale(Tape& t, int a, double s) {
  int id = t.push(t.val(a) * s, t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, s, id] { t.grad(a) += s * t.grad(id); });
  return id;
}

inline int matmul(Tape& t, int a, int b) {
  require(t.val(a).cols() == t.val(b).rows(), "matmul: inner dims differ");
  int id = t.push(t.val(a) * t.val(b), t.needs_grad(a) || t.needs_grad(b));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, b, id] {
      if (t.needs_grad(a)) t.grad(a) += t.grad(id) * t.val(b).transpose();
      if (t.needs_grad(b)) t.grad(b) += t.val(a).transpose() * t.grad(id);
    });
  return id;
}

inline int hadamard(Tape& t, int a, int b) {
  int id = t.push(t.val(a).cwiseProduct(t.val(b)), t.needs_grad(a) || t.needs_grad(b));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, b, id] {
      if (t.needs_grad(a)) t.grad(a) += t.grad(id).cwiseProduct(t.val(b));
      if (t.needs_grad(b)) t.grad(b) += t.grad(id).cwiseProduct(t.val(a));
    });
  return id;
}

// Elementwise product with a constant 0/1 (or any fixed) matrix; the usual way
// masked rows get zeroed at stage boundaries.
inline int mask_mul(Tape& t, int a, Mat m) {
  require(m.rows() == t.val(a).rows() && m.cols() == t.val(a).cols(),
          "mask_mul: shape mismatch");
  int id = t.push(t.val(a).cwiseProduct(m), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id, m = std::move(m)] { t.grad(a) += t.grad(id).cwiseProduct(m); });
  return id;
}

inline int transpose(Tape& t, int a) {
  int id = t.push(t.val(a).transpose(), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id] { t.grad(a) += t.grad(id).transpose(); });
  return id;
}

// Adds a 1xC row vector to every row of an RxC matrix (bias broadcast).
inline int add_row_broadcast(Tape& t, int a, int row) {
  require(t.val(row).rows() == 1 && t.val(row).cols() == t.val(a).cols(),
          "add_row_broadcast: need 1xC row matching a's columns");
  Mat v = t.val(a);
  v.rowwise() += t.val(row).row(0);
  int id = t.push(std::move(v), t.needs_grad(a) || t.needs_grad(row));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, row, id] {
      if (t.needs_grad(a)) t.grad(a) += t.grad(id);
      if (t.needs_grad(row)) t.grad(row) += t.grad(id).colwise().sum();
    });
  return id;
}

// y = x * w(i,j): scale a whole matrix by one element of another node. Used by
// the fusion head where per-branch weights come off a softmax node.
inline int scale_by_element(Tape& t, int x, int w, int i, int j) {
  double s = t.val(w)(i, j);
  int id = t.push(t.val(x) * s, t.needs_grad(x) || t.needs_grad(w));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, x, w, i, j, s, id] {
      if (t.needs_grad(x)) t.grad(x) += s * t.grad(id);
      if (t.needs_grad(w)) t.grad(w)(i, j) += t.grad(id).cwiseProduct(t.val(x)).sum();
    });
  return id;
}

// ---- shape ops -------------------------------------------------------------

inline int reshape(Tape& t, int a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == t.val(a).size(), "reshape: element count mismatch");
  Mat v = Mat::Map(t.val(a).data(), rows, cols);  // row-major, so order is preserved
  int id = t.push(std::move(v), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id] {
      const Mat& g = t.grad(id);
      t.grad(a) += Mat::Map(g.data(), t.val(a).rows(), t.val(a).cols());
    });
  return id;
}

inline int flatten(Tape& t, int a) { return reshape(t, a, 1, t.val(a).size()); }

inline int slice_rows(Tape& t, int a, Eigen::Index r0, Eigen::Index n) {
  require(r0 >= 0 && r0 + n <= t.val(a).rows(), "slice_rows: out of range");
  int id = t.push(t.val(a).middleRows(r0, n), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, r0, n, id] { t.grad(a).middleRows(r0, n) += t.grad(id); });
  return id;
}

inline int slice_cols(Tape& t, int a, Eigen::Index c0, Eigen::Index n) {
  require(c0 >= 0 && c0 + n <= t.val(a).cols(), "slice_cols: out of range");
  int id = t.push(t.val(a).middleCols(c0, n), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, c0, n, id] { t.grad(a).middleCols(c0, n) += t.grad(id); });
  return id;
}

inline int concat_rows(Tape& t, std::vector<int> parts) {
  require(!parts.empty(), "concat_rows: empty");
  Eigen::Index rows = 0, cols = t.val(parts[0]).cols();
  bool ng = false;
  for (int p : parts) {
    require(t.val(p).cols() == cols, "concat_rows: column mismatch");
    rows += t.val(p).rows();
    ng = ng || t.needs_grad(p);
  }
  Mat v(rows, cols);
  Eigen::Index r = 0;
  for (int p : parts) {
    v.middleRows(r, t.val(p).rows()) = t.val(p);
    r += t.val(p).rows();
  }
  int id = t.push(std::move(v), ng);
  if (ng)
    t.set_backward(id, [&t, parts = std::move(parts), id] {
      Eigen::Index r = 0;
      for (int p : parts) {
        Eigen::Index n = t.val(p).rows();
        if (t.needs_grad(p)) t.grad(p) += t.grad(id).middleRows(r, n);
        r += n;
      }
    });
  return id;
}

inline int concat_cols(Tape& t, std::vector<int> parts) {
  require(!parts.empty(), "concat_cols: empty");
  Eigen::Index cols = 0, rows = t.val(parts[0]).rows();
  bool ng = false;
  for (int p : parts) {
    require(t.val(p).rows() == rows, "concat_cols: row mismatch");
    cols += t.val(p).cols();
    ng = ng || t.needs_grad(p);
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  for (int p : parts) {
    v.middleCols(c, t.val(p).cols()) = t.val(p);
    c += t.val(p).cols();
  }
  int id = t.push(std::move(v), ng);
  if (ng)
    t.set_backward(id, [&t, parts = std::move(parts), id] {
      Eigen::Index c = 0;
      for (int p : parts) {
        Eigen::Index n = t.val(p).cols();
        if (t.needs_grad(p)) t.grad(p) += t.grad(id).middleCols(c, n);
        c += n;
      }
    });
  return id;
}

// ---- nonlinearities ---------------------------------------------------------

inline int relu(Tape& t, int a) {
  int id = t.push(t.val(a).cwiseMax(0.0), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id] {
      t.grad(a) += t.grad(id).cwiseProduct(
          (t.val(a).array() > 0.0).cast<double>().matrix());
    });
  return id;
}

// tanh-form GELU; smooth everywhere, which keeps finite-difference gradient
// checks honest.
inline int gelu(Tape& t, int a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const Mat& x = t.val(a);
  Mat inner = (c * (x.array() + 0.044715 * x.array().cube())).matrix();
  Mat th = inner.array().tanh().matrix();
  Mat v = (0.5 * x.array() * (1.0 + th.array())).matrix();
  int id = t.push(std::move(v), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id, th = std::move(th), c] {
      const auto x = t.val(a).array();
      const auto tharr = th.array();
      auto sech2 = 1.0 - tharr.square();
      auto dinner = c * (1.0 + 3.0 * 0.044715 * x.square());
      Mat d = (0.5 * (1.0 + tharr) + 0.5 * x * sech2 * dinner).matrix();
      t.grad(a) += t.grad(id).cwiseProduct(d);
    });
  return id;
}

// ---- normalization / softmax -------------------------------------------------

// Row-wise layer norm with per-column affine parameters gamma, beta (1xC nodes).
inline int layernorm(Tape& t, int a, int gamma, int beta, double eps = 1e-5) {
  const Mat& x = t.val(a);
  Eigen::Index R = x.rows(), C = x.cols();
  Mat xhat(R, C);
  Vec mu(R), istd(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    double m = x.row(r).mean();
    double var = (x.row(r).array() - m).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    mu(r) = m;
    istd(r) = is;
    xhat.row(r) = (x.row(r).array() - m) * is;
  }
  Mat v = xhat;
  for (Eigen::Index r = 0; r < R; ++r)
    v.row(r) = v.row(r).cwiseProduct(t.val(gamma).row(0)) + t.val(beta).row(0);
  bool ng = t.needs_grad(a) || t.needs_grad(gamma) || t.needs_grad(beta);
  int id = t.push(std::move(v), ng);
  if (ng)
    t.set_backward(id, [&t, a, gamma, beta, id, xhat = std::move(xhat), istd = std::move(istd)] {
      const Mat& g = t.grad(id);
      Eigen::Index R = g.rows(), C = g.cols();
      if (t.needs_grad(beta)) t.grad(beta) += g.colwise().sum();
      if (t.needs_grad(gamma)) t.grad(gamma) += g.cwiseProduct(xhat).colwise().sum();
      if (t.needs_grad(a)) {
        const Mat& gm = t.val(gamma);
        for (Eigen::Index r = 0; r < R; ++r) {
          Vec gy = g.row(r).cwiseProduct(gm.row(0));
          double s1 = gy.sum() / double(C);
          double s2 = gy.cwiseProduct(xhat.row(r)).sum() / double(C);
          t.grad(a).row(r) +=
              istd(r) * (gy.array() - s1 - xhat.row(r).array() * s2).matrix();
        }
      }
    });
  return id;
}

// Row-wise softmax with an optional 0/1 validity mask (same shape). Masked
// entries get probability 0; a row with empty support comes out all-zero.
inline int masked_softmax(Tape& t, int a, const Mat& mask) {
  const Mat& x = t.val(a);
  require(mask.rows() == x.rows() && mask.cols() == x.cols(),
          "masked_softmax: mask shape mismatch");
  Mat p(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (mask(r, c) != 0.0 && x(r, c) > mx) mx = x(r, c);
    if (!std::isfinite(mx)) {
      p.row(r).setZero();
      continue;
    }
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double e = mask(r, c) != 0.0 ? std::exp(x(r, c) - mx) : 0.0;
      p(r, c) = e;
      z += e;
    }
    p.row(r) /= z;
  }
  int id = t.push(p, t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id] {
      const Mat& p = t.val(id);
      const Mat& g = t.grad(id);
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double dot = g.row(r).cwiseProduct(p.row(r)).sum();
        t.grad(a).row(r) += (p.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
    });
  return id;
}

inline int softmax_rows(Tape& t, int a) {
  return masked_softmax(t, a, Mat::Ones(t.val(a).rows(), t.val(a).cols()));
}

inline int l2_normalize_rows(Tape& t, int a, double eps = 1e-12) {
  const Mat& x = t.val(a);
  Vec inv(x.rows());
  Mat v(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double n = std::sqrt(x.row(r).squaredNorm() + eps);
    inv(r) = 1.0 / n;
    v.row(r) = x.row(r) * inv(r);
  }
  int id = t.push(std::move(v), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id, inv = std::move(inv)] {
      const Mat& y = t.val(id);
      const Mat& g = t.grad(id);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        double dot = g.row(r).cwiseProduct(y.row(r)).sum();
        t.grad(a).row(r) += inv(r) * (g.row(r) - dot * y.row(r));
      }
    });
  return id;
}

// Elementwise max across same-shaped nodes; gradient routes to the earliest
// argmax so tie-breaking is deterministic.
inline int elementwise_max(Tape& t, std::vector<int> parts) {
  require(!parts.empty(), "elementwise_max: empty");
  Mat v = t.val(parts[0]);
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg =
      Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(v.rows(), v.cols());
  bool ng = t.needs_grad(parts[0]);
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Mat& x = t.val(parts[k]);
    require(x.rows() == v.rows() && x.cols() == v.cols(), "elementwise_max: shape mismatch");
    ng = ng || t.needs_grad(parts[k]);
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index c = 0; c < v.cols(); ++c)
        if (x(r, c) > v(r, c)) {
          v(r, c) = x(r, c);
          arg(r, c) = static_cast<int>(k);
        }
  }
  int id = t.push(std::move(v), ng);
  if (ng)
    t.set_backward(id, [&t, parts = std::move(parts), id, arg = std::move(arg)] {
      const Mat& g = t.grad(id);
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
          int k = arg(r, c);
          if (t.needs_grad(parts[k])) t.grad(parts[k])(r, c) += g(r, c);
        }
    });
  return id;
}

// Mean of all elements -> 1x1. Handy for reducing batch losses.
inline int mean_all(Tape& t, int a) {
  double inv = 1.0 / double(t.val(a).size());
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum() * inv;
  int id = t.push(std::move(v), t.needs_grad(a));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, a, id, inv] {
      t.grad(a).array() += t.grad(id)(0, 0) * inv;
    });
  return id;
}

// ---- losses -----------------------------------------------------------------

// Label-smoothed cross entropy on a 1xC logit row. Target distribution is
// (1-eps) on the true class plus eps/C everywhere.
inline int cross_entropy_smoothed(Tape& t, int logits, int target, double eps) {
  const Mat& z = t.val(logits);
  require(z.rows() == 1, "cross_entropy_smoothed: expects a 1xC row");
  Eigen::Index C = z.cols();
  require(target >= 0 && target < C, "cross_entropy_smoothed: target out of range");
  double mx = z.maxCoeff();
  Vec ex = (z.row(0).array() - mx).exp();
  double Z = ex.sum();
  Vec logp = (z.row(0).array() - mx - std::log(Z)).matrix();
  Vec q = Vec::Constant(C, eps / double(C));
  q(target) += 1.0 - eps;
  Mat v(1, 1);
  v(0, 0) = -q.cwiseProduct(logp).sum();
  int id = t.push(std::move(v), t.needs_grad(logits));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, logits, id, p = Vec((ex / Z).matrix()), q = std::move(q)] {
      t.grad(logits).row(0) += t.grad(id)(0, 0) * (p - q);
    });
  return id;
}

// ---- straight-through retrieval ----------------------------------------------

// Per row: logits = sim/tau (+ optional pre-drawn Gumbel noise); soft =
// softmax(logits); forward emits the hard one-hot at soft's argmax (ties to
// the lowest index); the gradient flows through the soft path only, i.e. the
// hard-soft difference is treated as a constant.
inline int straight_through_onehot(Tape& t, int sim, double tau, const Mat* noise) {
  require(tau > 0.0, "straight_through_onehot: tau must be positive");
  const Mat& m = t.val(sim);
  Mat logits = m / tau;
  if (noise) {
    require(noise->rows() == m.rows() && noise->cols() == m.cols(),
            "straight_through_onehot: noise shape mismatch");
    logits += *noise;
  }
  Mat soft(m.rows(), m.cols());
  Mat hard = Mat::Zero(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    Vec ex = (logits.row(r).array() - mx).exp();
    soft.row(r) = ex / ex.sum();
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
      if (soft(r, c) > soft(r, best)) best = c;
    hard(r, best) = 1.0;
  }
  int id = t.push(std::move(hard), t.needs_grad(sim));
  if (t.needs_grad(id))
    t.set_backward(id, [&t, sim, id, tau, soft = std::move(soft)] {
      const Mat& g = t.grad(id);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double dot = g.row(r).cwiseProduct(soft.row(r)).sum();
        t.grad(sim).row(r) +=
            (1.0 / tau) * (soft.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
    });
  return id;
}

// Soft variant of the same retrieval (the "normal softmax" ablation mode):
// forward emits softmax(sim/tau + noise) directly.
inline int soft_retrieval(Tape& t, int sim, double tau, const Mat* noise) {
  require(tau > 0.0, "soft_retrieval: tau must be positive");
  int scaled = scale(t, sim, 1.0 / tau);
  if (noise) {
    int n = t.input(*noise);
    scaled = add(t, scaled, n);
  }
  return softmax_rows(t, scaled);
}

}  // namespace aornet::ad
