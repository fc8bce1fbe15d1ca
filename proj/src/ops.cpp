#include "hgcl/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hgcl/errors.hpp"
#include "hgcl/serialize.hpp"

namespace hgcl::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                  static_cast<Eigen::Index>(t.shape()[1]));
}

MutMap mmap(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                static_cast<Eigen::Index>(t.shape()[1]));
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::logic_error("Var is not bound to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("operands recorded on different tapes");
  return tape_of(a);
}

void require_matrix(Var v, const char* what) { hgcl::require_matrix(v.value(), what); }

int check_axis(int axis, const char* what) {
  if (axis != 0 && axis != 1) {
    throw DimensionError(std::string(what) + ": axis must be 0 or 1, got " + std::to_string(axis));
  }
  return axis;
}

// Elementwise unary op with derivative expressed through input and output values.
template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, deriv](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& in = tp.value(xid);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < in.size(); ++i) (*gx)[i] += g[i] * deriv(in[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  mmap(out).noalias() = cmap(av) * cmap(bv);
  const std::size_t aid = a.id, bid = b.id;
  return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.accumulator(aid)) {
      mmap(*ga).noalias() += cmap(g) * cmap(tp.value(bid)).transpose();
    }
    if (Tensor* gb = tp.accumulator(bid)) {
      mmap(*gb).noalias() += cmap(tp.value(aid)).transpose() * cmap(g);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_matrix(a, "transpose");
  const std::size_t aid = a.id;
  return t.record(a.value().transposed(), {a}, [aid](Tape& tp, std::size_t self) {
    if (Tensor* ga = tp.accumulator(aid)) mmap(*ga) += cmap(tp.grad(self)).transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    for (std::size_t id : {aid, bid}) {
      if (Tensor* acc = tp.accumulator(id))
        for (std::size_t i = 0; i < g.size(); ++i) (*acc)[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.accumulator(aid))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tp.accumulator(bid))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return t.record(std::move(out), {a, b}, [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* ga = tp.accumulator(aid)) {
      const Tensor& bv = tp.value(bid);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.accumulator(bid)) {
      const Tensor& av = tp.value(aid);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var add_rowvec(Var x, Var row) {
  Tape& t = tape_of(x, row);
  require_matrix(x, "add_rowvec");
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.size() != xv.cols()) {
    throw DimensionError("add_rowvec: row of shape " + shape_string(rv.shape()) +
                         " does not match " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += rv[j];
  const std::size_t xid = x.id, rid = row.id;
  return t.record(std::move(out), {x, row}, [xid, rid, n, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* gx = tp.accumulator(xid))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    if (Tensor* gr = tp.accumulator(rid))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gr)[j] += g(i, j);
  });
}

Var mul_colvec(Var x, Var col) {
  Tape& t = tape_of(x, col);
  require_matrix(x, "mul_colvec");
  const Tensor& xv = x.value();
  const Tensor& cv = col.value();
  if (cv.size() != xv.rows()) {
    throw DimensionError("mul_colvec: column of shape " + shape_string(cv.shape()) +
                         " does not match " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t n = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= cv[i];
  const std::size_t xid = x.id, cid = col.id;
  return t.record(std::move(out), {x, col}, [xid, cid, n, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* gx = tp.accumulator(xid)) {
      const Tensor& cvv = tp.value(cid);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)(i, j) += g(i, j) * cvv[i];
    }
    if (Tensor* gc = tp.accumulator(cid)) {
      const Tensor& xvv = tp.value(xid);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += g(i, j) * xvv(i, j);
        (*gc)[i] += s;
      }
    }
  });
}

Var mul_scalar(Var x, Var s) {
  Tape& t = tape_of(x, s);
  const double sv = s.value().item();
  Tensor out = x.value();
  for (double& v : out.data()) v *= sv;
  const std::size_t xid = x.id, sid = s.id;
  return t.record(std::move(out), {x, s}, [xid, sid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (Tensor* gx = tp.accumulator(xid)) {
      const double k = tp.value(sid).item();
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * k;
    }
    if (Tensor* gs = tp.accumulator(sid)) {
      const Tensor& xv = tp.value(xid);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      (*gs)[0] += acc;
    }
  });
}

Var scale(Var x, double factor) {
  return unary(x, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Var neg(Var x) { return scale(x, -1.0); }

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / y; });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var arcosh(Var x) {
  for (double v : x.value().data()) {
    if (!(v >= 1.0)) {
      throw DomainError("arcosh: argument " + format_double(v) + " is below 1");
    }
  }
  return unary(
      x, [](double v) { return std::log(v + std::sqrt(v * v - 1.0)); },
      [](double v, double) { return 1.0 / std::sqrt(std::max(v * v - 1.0, kArcoshEpsilon)); });
}

Var clamp_min(Var x, double floor) {
  return unary(x, [floor](double v) { return v < floor ? floor : v; },
               [floor](double v, double) { return v < floor ? 0.0 : 1.0; });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xid = x.id;
  return t.record(Tensor::scalar(s), {x}, [xid](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    if (Tensor* gx = tp.accumulator(xid))
      for (double& v : gx->data()) v += g;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_axis(Var x, int axis) {
  Tape& t = tape_of(x);
  require_matrix(x, "sum_axis");
  check_axis(axis, "sum_axis");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out(axis == 0 ? Shape{1, c} : Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += xv(i, j);
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, axis, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)(i, j) += g[axis == 0 ? j : i];
  });
}

Var mean_axis(Var x, int axis) {
  require_matrix(x, "mean_axis");
  check_axis(axis, "mean_axis");
  const double n = static_cast<double>(x.value().shape()[static_cast<std::size_t>(axis)]);
  return scale(sum_axis(x, axis), 1.0 / n);
}

Var max_axis(Var x, int axis) {
  Tape& t = tape_of(x);
  require_matrix(x, "max_axis");
  check_axis(axis, "max_axis");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (n == 0 || c == 0) throw DimensionError("max_axis over an empty matrix");
  const std::size_t outer = axis == 0 ? c : n;
  const std::size_t inner = axis == 0 ? n : c;
  Tensor out(axis == 0 ? Shape{1, c} : Shape{n, 1});
  std::vector<std::size_t> argmax(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = 0;
    double bv = axis == 0 ? xv(0, o) : xv(o, 0);
    for (std::size_t k = 1; k < inner; ++k) {
      const double v = axis == 0 ? xv(k, o) : xv(o, k);
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    out[o] = bv;
    argmax[o] = axis == 0 ? best * c + o : o * c + best;
  }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, argmax](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += g[o];
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  require_matrix(x, "softmax_rows");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, xv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) = std::exp(xv(i, j) - m);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < c; ++j) (*gx)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var avg_pool_2x2(Var x, std::size_t side) {
  Tape& t = tape_of(x);
  require_matrix(x, "avg_pool_2x2");
  const Tensor& xv = x.value();
  if (side == 0 || side % 2 != 0 || xv.rows() != side * side) {
    throw DimensionError("avg_pool_2x2: " + shape_string(xv.shape()) + " is not an even " +
                         std::to_string(side) + "x" + std::to_string(side) + " grid");
  }
  const std::size_t half = side / 2, c = xv.cols();
  Tensor out({half * half, c});
  for (std::size_t r = 0; r < half; ++r)
    for (std::size_t q = 0; q < half; ++q)
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dq = 0; dq < 2; ++dq) {
          const std::size_t src = (2 * r + dr) * side + 2 * q + dq;
          for (std::size_t j = 0; j < c; ++j) out(r * half + q, j) += 0.25 * xv(src, j);
        }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, side, half, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t q = 0; q < side; ++q) {
        const std::size_t dst = (r / 2) * half + q / 2;
        for (std::size_t j = 0; j < c; ++j) (*gx)(r * side + q, j) += 0.25 * g(dst, j);
      }
  });
}

Var attention_weights(Var q, Var k, double scale) {
  Tape& t = tape_of(q, k);
  require_matrix(q, "attention_weights query");
  require_matrix(k, "attention_weights key");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  if (qv.cols() != kv.cols()) {
    throw DimensionError("attention_weights: query " + shape_string(qv.shape()) + " and key " +
                         shape_string(kv.shape()) + " differ in width");
  }
  const std::size_t n = qv.rows(), c = kv.rows();
  Tensor out({n, c});
  auto a = mmap(out);
  a.noalias() = cmap(qv) * cmap(kv).transpose();
  for (std::size_t i = 0; i < n; ++i) {
    auto r = a.row(static_cast<Eigen::Index>(i));
    r *= scale;
    r = (r.array() - r.maxCoeff()).exp();
    r /= r.sum();
  }
  const std::size_t qid = q.id, kid = k.id;
  return t.record(std::move(out), {q, k}, [qid, kid, scale](Tape& tp, std::size_t self) {
    const auto g = cmap(tp.grad(self));
    const auto y = cmap(tp.value(self));
    // d(scores) = y * (g - rowsum(g * y)), folded with the scale.
    RowMat ds = y.cwiseProduct(g);
    const Eigen::VectorXd dots = ds.rowwise().sum();
    ds -= (y.array().colwise() * dots.array()).matrix();
    ds *= scale;
    if (Tensor* gq = tp.accumulator(qid)) mmap(*gq).noalias() += ds * cmap(tp.value(kid));
    if (Tensor* gk = tp.accumulator(kid)) {
      mmap(*gk).noalias() += ds.transpose() * cmap(tp.value(qid));
    }
  });
}

Var logsumexp_rows_masked(Var x, const Tensor& mask) {
  Tape& t = tape_of(x);
  require_matrix(x, "logsumexp_rows_masked");
  require_same_shape(x.shape(), mask.shape(), "logsumexp_rows_masked");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor out({n, 1}, kNegInf);
  for (std::size_t i = 0; i < n; ++i) {
    double m = kNegInf;
    for (std::size_t j = 0; j < c; ++j)
      if (mask(i, j) != 0.0) m = std::max(m, xv(i, j));
    if (m == kNegInf) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask(i, j) != 0.0) z += std::exp(xv(i, j) - m);
    out[i] = m + std::log(z);
  }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, mask, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& in = tp.value(xid);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(y[i]) || g[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j)
        if (mask(i, j) != 0.0) (*gx)(i, j) += g[i] * std::exp(in(i, j) - y[i]);
    }
  });
}

Var normalize_sum(Var x) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  if (s == 0.0) throw DomainError("normalize_sum: entries sum to zero");
  Tensor out = xv;
  for (double& v : out.data()) v /= s;
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, s](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += (g[i] - dot) / s;
  });
}

Var normalize_cols(Var x) {
  Tape& t = tape_of(x);
  require_matrix(x, "normalize_cols");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  std::vector<double> colsum(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) colsum[j] += xv(i, j);
  for (double s : colsum)
    if (s == 0.0) throw DomainError("normalize_cols: a column sums to zero");
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= colsum[j];
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, colsum, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g(i, j) * y(i, j);
      for (std::size_t i = 0; i < n; ++i) (*gx)(i, j) += (g(i, j) - dot) / colsum[j];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t c = parts.front().value().cols();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.value().cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    n += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(n * c);
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id);
  }
  return t.record(Tensor({n, c}, std::move(data)), parts, [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t len = tp.value(id).size();
      if (Tensor* acc = tp.accumulator(id))
        for (std::size_t k = 0; k < len; ++k) (*acc)[k] += g[offset + k];
      offset += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t n = parts.front().value().rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.value().rows() != n) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    c += p.value().cols();
  }
  Tensor out({n, c});
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offset + j) = pv(i, j);
    offset += pv.cols();
    ids.push_back(p.id);
  }
  return t.record(std::move(out), parts, [ids, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = tp.value(id).cols();
      if (Tensor* acc = tp.accumulator(id))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) (*acc)(i, j) += g(i, off + j);
      off += w;
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(x);
  require_matrix(x, "slice_rows");
  const Tensor& xv = x.value();
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + shape_string(xv.shape()));
  }
  const std::size_t c = xv.cols();
  std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           xv.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  const std::size_t xid = x.id;
  return t.record(Tensor({end - begin, c}, std::move(data)), {x},
                  [xid, begin, c](Tape& tp, std::size_t self) {
                    Tensor* gx = tp.accumulator(xid);
                    if (!gx) return;
                    const Tensor& g = tp.grad(self);
                    for (std::size_t k = 0; k < g.size(); ++k) (*gx)[begin * c + k] += g[k];
                  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(x);
  require_matrix(x, "slice_cols");
  const Tensor& xv = x.value();
  if (begin > end || end > xv.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + shape_string(xv.shape()));
  }
  const std::size_t n = xv.rows(), w = end - begin;
  Tensor out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = xv(i, begin + j);
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, begin, n, w](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) (*gx)(i, begin + j) += g(i, j);
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = tape_of(x);
  const std::size_t xid = x.id;
  return t.record(x.value().reshaped(std::move(shape)), {x}, [xid](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    for (std::size_t k = 0; k < g.size(); ++k) (*gx)[k] += g[k];
  });
}

Var l2_norm_rows(Var x) {
  Tape& t = tape_of(x);
  require_matrix(x, "l2_norm_rows");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv(i, j) * xv(i, j);
    out[i] = std::sqrt(s);
  }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& in = tp.value(xid);
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) (*gx)(i, j) += g[i] * in(i, j) / y[i];
    }
  });
}

Var pairwise_euclidean(Var x) {
  Tape& t = tape_of(x);
  require_matrix(x, "pairwise_euclidean");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = xv(i, k) - xv(j, k);
        s += d * d;
      }
      out(i, j) = out(j, i) = std::sqrt(s);
    }
  }
  const std::size_t xid = x.id;
  return t.record(std::move(out), {x}, [xid, n, c](Tape& tp, std::size_t self) {
    Tensor* gx = tp.accumulator(xid);
    if (!gx) return;
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& in = tp.value(xid);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (y(i, j) == 0.0) continue;
        const double w = (g(i, j) + g(j, i)) / y(i, j);
        for (std::size_t k = 0; k < c; ++k) {
          const double d = w * (in(i, k) - in(j, k));
          (*gx)(i, k) += d;
          (*gx)(j, k) -= d;
        }
      }
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits);
  require_matrix(logits, "cross_entropy");
  const Tensor& lv = logits.value();
  const std::size_t n = lv.rows(), c = lv.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0) throw DimensionError("cross_entropy: empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                            std::to_string(c) + ")");
    }
  }
  Tensor probs({n, c});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) m = std::max(m, lv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv(i, j) - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(lv(i, j) - lse);
    total += lse - lv(i, static_cast<std::size_t>(labels[i]));
  }
  std::vector<int> ys(labels.begin(), labels.end());
  const std::size_t lid = logits.id;
  return t.record(Tensor::scalar(total / static_cast<double>(n)), {logits},
                  [lid, probs = std::move(probs), ys = std::move(ys), n, c](Tape& tp,
                                                                           std::size_t self) {
                    Tensor* gl = tp.accumulator(lid);
                    if (!gl) return;
                    const double g = tp.grad(self)[0] / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        (*gl)(i, j) +=
                            g * (probs(i, j) - (static_cast<int>(j) == ys[i] ? 1.0 : 0.0));
                  });
}

}  // namespace hgcl::ops
