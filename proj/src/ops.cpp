#include "symdec/ops.hpp"

#include <cmath>
#include <numbers>

#include "symdec/grid.hpp"

namespace symdec::ops {
namespace {

template <typename S>
using Refs = ad::TensorRefs<S>;
template <typename S>
using Grads = std::vector<Tensor<S>>;

void expect_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

void expect_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

Index row_vector_length(const Shape& s, const char* op) {
  if (s.size() == 1) return s[0];
  if (s.size() == 2 && s[0] == 1) return s[1];
  throw ShapeError(std::string(op) + ": expected a row vector, got " + shape_string(s));
}

template <typename S>
Tensor<S> elementwise(const Tensor<S>& x, auto fn) {
  Tensor<S> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return out;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Softmax attention weights for one head: P = softmax(Q_h K_hᵀ · scale), row-wise.
template <typename S>
RowMatrix<S> head_weights(const Tensor<S>& q, const Tensor<S>& k, Index n, Index c, Index off, Index dh, S scale) {
  auto qm = q.matrix(n, c).middleCols(off, dh);
  auto km = k.matrix(n, c).middleCols(off, dh);
  RowMatrix<S> p = (qm * km.transpose()) * scale;
  for (Index i = 0; i < n; ++i) {
    auto row = p.row(i);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  return p;
}

struct GconvGeometry {
  Index n, ci, co, h, w;
};

GconvGeometry gconv_geometry(const Shape& xs, const Shape& fs, const Shape& bs, int n) {
  expect_rank(xs, 4, "gconv input");
  expect_rank(fs, 5, "gconv filters");
  if (xs[0] != n) throw ShapeError("gconv: input has " + std::to_string(xs[0]) + " rotation slots, expected " + std::to_string(n));
  if (fs[2] != n || fs[3] != 3 || fs[4] != 3) {
    throw ShapeError("gconv: filters must be [Co, Ci, n, 3, 3], got " + shape_string(fs));
  }
  if (fs[1] != xs[1]) throw ShapeError("gconv: filter input channels " + std::to_string(fs[1]) + " vs input " + std::to_string(xs[1]));
  if (bs.size() != 1 || bs[0] != fs[0]) throw ShapeError("gconv: bias must be [Co], got " + shape_string(bs));
  return {n, xs[1], fs[0], xs[2], xs[3]};
}

/// Column matrix [n·Ci·9, h·w]: row (θ', ci, tap), column (x, y); zero padding.
template <typename S>
RowMatrix<S> im2col(const Tensor<S>& x, const GconvGeometry& g) {
  const Index planes = g.n * g.ci;
  RowMatrix<S> col = RowMatrix<S>::Zero(planes * kTaps, g.h * g.w);
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.data() + p * g.h * g.w;
    for (int t = 0; t < kTaps; ++t) {
      const Index dx = t / 3 - 1, dy = t % 3 - 1;
      S* dst = col.data() + (p * kTaps + t) * g.h * g.w;
      for (Index i = 0; i < g.h; ++i) {
        const Index si = i + dx;
        if (si < 0 || si >= g.h) continue;
        for (Index j = 0; j < g.w; ++j) {
          const Index sj = j + dy;
          if (sj < 0 || sj >= g.w) continue;
          dst[i * g.w + j] = src[si * g.w + sj];
        }
      }
    }
  }
  return col;
}

template <typename S>
Tensor<S> col2im(const RowMatrix<S>& col, const GconvGeometry& g) {
  Tensor<S> x(Shape{g.n, g.ci, g.h, g.w});
  const Index planes = g.n * g.ci;
  for (Index p = 0; p < planes; ++p) {
    S* dst = x.data() + p * g.h * g.w;
    for (int t = 0; t < kTaps; ++t) {
      const Index dx = t / 3 - 1, dy = t % 3 - 1;
      const S* src = col.data() + (p * kTaps + t) * g.h * g.w;
      for (Index i = 0; i < g.h; ++i) {
        const Index si = i + dx;
        if (si < 0 || si >= g.h) continue;
        for (Index j = 0; j < g.w; ++j) {
          const Index sj = j + dy;
          if (sj < 0 || sj >= g.w) continue;
          dst[si * g.w + sj] += src[i * g.w + j];
        }
      }
    }
  }
  return x;
}

/// Weight matrix for output slot θ: W_θ[co, (θ', ci, tap)] = (M_θ ψ[co, ci, (θ'-θ) mod n])[tap].
template <typename S>
RowMatrix<S> slot_weights(const Tensor<S>& filters, const Eigen::Matrix<double, 9, 9>& rot, const GconvGeometry& g,
                          Index slot) {
  RowMatrix<S> wt = RowMatrix<S>::Zero(g.co, g.n * g.ci * kTaps);
  const Eigen::Matrix<S, 9, 9> m = rot.cast<S>();
  for (Index co = 0; co < g.co; ++co) {
    for (Index ci = 0; ci < g.ci; ++ci) {
      for (Index delta = 0; delta < g.n; ++delta) {
        Eigen::Map<const Eigen::Matrix<S, 9, 1>> psi(filters.data() + ((co * g.ci + ci) * g.n + delta) * kTaps);
        const Index src_slot = (slot + delta) % g.n;
        wt.row(co).segment((src_slot * g.ci + ci) * kTaps, kTaps) = (m * psi).transpose();
      }
    }
  }
  return wt;
}

}  // namespace

std::vector<Eigen::Matrix<double, 9, 9>> filter_rotations(int n) {
  if (n < 1) throw ShapeError("filter_rotations: n must be positive");
  std::vector<Eigen::Matrix<double, 9, 9>> out;
  for (int s = 0; s < n; ++s) {
    const double theta = 360.0 * s / n;
    const int q = int(std::floor(theta / 90.0 + 1e-12)) % 4;
    const double alpha = (theta - 90.0 * q) * std::numbers::pi / 180.0;
    // Bilinear resampling about the kernel center for the residual angle α.
    Eigen::Matrix<double, 9, 9> b = Eigen::Matrix<double, 9, 9>::Zero();
    if (std::abs(alpha) < 1e-12) {
      b.setIdentity();
    } else {
      const double cs = std::cos(alpha), sn = std::sin(alpha);
      for (int t = 0; t < 9; ++t) {
        const double u = t / 3 - 1, v = t % 3 - 1;
        const double sx = cs * u + sn * v + 1.0, sy = -sn * u + cs * v + 1.0;
        const double fx = std::floor(sx), fy = std::floor(sy);
        const double ax = sx - fx, ay = sy - fy;
        for (int a = 0; a < 2; ++a) {
          for (int c = 0; c < 2; ++c) {
            const int ix = int(fx) + a, iy = int(fy) + c;
            const double wgt = (a ? ax : 1 - ax) * (c ? ay : 1 - ay);
            if (ix < 0 || iy < 0 || ix > 2 || iy > 2 || wgt == 0.0) continue;
            b(t, ix * 3 + iy) += wgt;
          }
        }
      }
    }
    // Exact quarter turns: (rot90^q K)[x, y] = K[src_q(x, y)], same index map as grid::rotate90.
    Eigen::Matrix<double, 9, 9> m;
    for (int t = 0; t < 9; ++t) {
      int x = t / 3, y = t % 3;
      for (int r = 0; r < q; ++r) {
        const int sx = y, sy = 2 - x;
        x = sx;
        y = sy;
      }
      m.row(t) = b.row(x * 3 + y);
    }
    out.push_back(m);
  }
  return out;
}

template <typename S>
RulePtr<S> matmul_rule() {
  return ad::make_rule<S>(
      "matmul",
      [](Refs<S> in) {
        const auto& a = *in[0];
        const auto& b = *in[1];
        expect_rank(a.shape(), 2, "matmul");
        expect_rank(b.shape(), 2, "matmul");
        if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
        Tensor<S> out(Shape{a.dim(0), b.dim(1)});
        out.matrix().noalias() = a.matrix() * b.matrix();
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& a = *in[0];
        const auto& b = *in[1];
        Tensor<S> da(a.shape()), db(b.shape());
        da.matrix().noalias() = g.matrix() * b.matrix().transpose();
        db.matrix().noalias() = a.matrix().transpose() * g.matrix();
        return Grads<S>{da, db};
      });
}

template <typename S>
RulePtr<S> add_rule() {
  return ad::make_rule<S>(
      "add",
      [](Refs<S> in) {
        expect_same(in[0]->shape(), in[1]->shape(), "add");
        return Tensor<S>(in[0]->shape(), in[0]->vec() + in[1]->vec());
      },
      [](Refs<S>, const Tensor<S>&, const Tensor<S>& g) { return Grads<S>{g, g}; });
}

template <typename S>
RulePtr<S> add_row_rule() {
  return ad::make_rule<S>(
      "add_row",
      [](Refs<S> in) {
        const auto& x = *in[0];
        expect_rank(x.shape(), 2, "add_row");
        const Index c = row_vector_length(in[1]->shape(), "add_row");
        if (c != x.dim(1)) throw ShapeError("add_row: vector length " + std::to_string(c) + " vs " + shape_string(x.shape()));
        Tensor<S> out = x;
        out.matrix().rowwise() += in[1]->row();
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> db(in[1]->shape());
        db.matrix(1, db.size()) = g.matrix().colwise().sum();
        return Grads<S>{g, db};
      });
}

template <typename S>
RulePtr<S> mul_row_rule() {
  return ad::make_rule<S>(
      "mul_row",
      [](Refs<S> in) {
        const auto& x = *in[0];
        expect_rank(x.shape(), 2, "mul_row");
        const Index c = row_vector_length(in[1]->shape(), "mul_row");
        if (c != x.dim(1)) throw ShapeError("mul_row: vector length " + std::to_string(c) + " vs " + shape_string(x.shape()));
        Tensor<S> out = x;
        out.matrix().array().rowwise() *= in[1]->row().array();
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& x = *in[0];
        const Index c = x.dim(1);
        Tensor<S> dx = g;
        dx.matrix().array().rowwise() *= in[1]->row().array();
        Tensor<S> dg(in[1]->shape());
        dg.matrix(1, c) = (g.matrix().array() * x.matrix().array()).colwise().sum();
        return Grads<S>{dx, dg};
      });
}

template <typename S>
RulePtr<S> scale_rule(double factor) {
  return ad::make_rule<S>(
      "scale", [factor](Refs<S> in) { return Tensor<S>(in[0]->shape(), in[0]->vec() * S(factor)); },
      [factor](Refs<S>, const Tensor<S>&, const Tensor<S>& g) {
        return Grads<S>{Tensor<S>(g.shape(), g.vec() * S(factor))};
      });
}

template <typename S>
RulePtr<S> layer_norm_rule(double eps) {
  // xhat = (x - mean) / sqrt(var + eps); y = xhat ⊙ gain + shift.
  auto normalize = [eps](const Tensor<S>& x, RowMatrix<S>& xhat, Eigen::Matrix<S, Eigen::Dynamic, 1>& inv_std) {
    const Index n = x.dim(0), c = x.dim(1);
    auto xm = x.matrix();
    xhat.resize(n, c);
    inv_std.resize(n);
    for (Index i = 0; i < n; ++i) {
      const S mean = xm.row(i).mean();
      const S var = (xm.row(i).array() - mean).square().mean();
      inv_std[i] = S(1) / std::sqrt(var + S(eps));
      xhat.row(i) = (xm.row(i).array() - mean) * inv_std[i];
    }
  };
  return ad::make_rule<S>(
      "layer_norm",
      [normalize](Refs<S> in) {
        const auto& x = *in[0];
        expect_rank(x.shape(), 2, "layer_norm");
        const Index c = x.dim(1);
        if (row_vector_length(in[1]->shape(), "layer_norm") != c || row_vector_length(in[2]->shape(), "layer_norm") != c) {
          throw ShapeError("layer_norm: affine parameters must have " + std::to_string(c) + " entries");
        }
        RowMatrix<S> xhat;
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
        normalize(x, xhat, inv_std);
        Tensor<S> out(x.shape());
        out.matrix() = (xhat.array().rowwise() * in[1]->row().array()).rowwise() + in[2]->row().array();
        return out;
      },
      [normalize](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& x = *in[0];
        const Index c = x.dim(1);
        RowMatrix<S> xhat;
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
        normalize(x, xhat, inv_std);
        const RowMatrix<S> dxhat = g.matrix().array().rowwise() * in[1]->row().array();
        Tensor<S> dx(x.shape());
        for (Index i = 0; i < x.dim(0); ++i) {
          const S m1 = dxhat.row(i).mean();
          const S m2 = (dxhat.row(i).array() * xhat.row(i).array()).mean();
          dx.matrix().row(i) = inv_std[i] * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
        }
        Tensor<S> dgain(in[1]->shape()), dshift(in[2]->shape());
        dgain.matrix(1, c) = (g.matrix().array() * xhat.array()).colwise().sum();
        dshift.matrix(1, c) = g.matrix().colwise().sum();
        return Grads<S>{dx, dgain, dshift};
      });
}

template <typename S>
RulePtr<S> gelu_rule() {
  return ad::make_rule<S>(
      "gelu", [](Refs<S> in) { return elementwise(*in[0], [](S v) { return S(gelu_value(double(v))); }); },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> dx(g.shape());
        for (Index i = 0; i < g.size(); ++i) dx[i] = g[i] * S(gelu_derivative(double((*in[0])[i])));
        return Grads<S>{dx};
      });
}

template <typename S>
RulePtr<S> relu_rule() {
  return ad::make_rule<S>(
      "relu", [](Refs<S> in) { return Tensor<S>(in[0]->shape(), in[0]->vec().cwiseMax(S(0))); },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> dx(g.shape());
        dx.vec() = (in[0]->vec().array() > S(0)).select(g.vec(), S(0));
        return Grads<S>{dx};
      });
}

template <typename S>
RulePtr<S> sigmoid_rule() {
  return ad::make_rule<S>(
      "sigmoid", [](Refs<S> in) { return elementwise(*in[0], [](S v) { return S(stable_sigmoid(double(v))); }); },
      [](Refs<S>, const Tensor<S>& out, const Tensor<S>& g) {
        return Grads<S>{Tensor<S>(g.shape(), (g.vec().array() * out.vec().array() * (S(1) - out.vec().array())).matrix())};
      });
}

template <typename S>
RulePtr<S> attention_rule(int heads) {
  return ad::make_rule<S>(
      "attention",
      [heads](Refs<S> in) {
        const auto& q = *in[0];
        expect_rank(q.shape(), 2, "attention");
        expect_same(q.shape(), in[1]->shape(), "attention");
        expect_same(q.shape(), in[2]->shape(), "attention");
        const Index n = q.dim(0), c = q.dim(1);
        if (heads < 1 || c % heads != 0) throw ShapeError("attention: width " + std::to_string(c) + " not divisible by heads");
        const Index dh = c / heads;
        const S scale = S(1) / std::sqrt(S(dh));
        Tensor<S> out(q.shape());
        for (int h = 0; h < heads; ++h) {
          const RowMatrix<S> p = head_weights(q, *in[1], n, c, h * dh, dh, scale);
          out.matrix(n, c).middleCols(h * dh, dh).noalias() = p * in[2]->matrix(n, c).middleCols(h * dh, dh);
        }
        return out;
      },
      [heads](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& q = *in[0];
        const auto& k = *in[1];
        const auto& v = *in[2];
        const Index n = q.dim(0), c = q.dim(1), dh = c / heads;
        const S scale = S(1) / std::sqrt(S(dh));
        Tensor<S> dq(q.shape()), dk(k.shape()), dv(v.shape());
        for (int h = 0; h < heads; ++h) {
          const Index off = h * dh;
          const RowMatrix<S> p = head_weights(q, k, n, c, off, dh, scale);
          auto go = g.matrix(n, c).middleCols(off, dh);
          dv.matrix(n, c).middleCols(off, dh).noalias() = p.transpose() * go;
          const RowMatrix<S> dp = go * v.matrix(n, c).middleCols(off, dh).transpose();
          RowMatrix<S> ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
          ds *= scale;
          dq.matrix(n, c).middleCols(off, dh).noalias() = ds * k.matrix(n, c).middleCols(off, dh);
          dk.matrix(n, c).middleCols(off, dh).noalias() = ds.transpose() * q.matrix(n, c).middleCols(off, dh);
        }
        return Grads<S>{dq, dk, dv};
      });
}

template <typename S>
RulePtr<S> select_row_rule(Index row) {
  return ad::make_rule<S>(
      "select_row",
      [row](Refs<S> in) {
        const auto& x = *in[0];
        expect_rank(x.shape(), 2, "select_row");
        if (row < 0 || row >= x.dim(0)) throw ShapeError("select_row: row out of range");
        Tensor<S> out(Shape{1, x.dim(1)});
        out.matrix() = x.matrix().row(row);
        return out;
      },
      [row](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> dx(in[0]->shape());
        dx.matrix().row(row) = g.matrix();
        return Grads<S>{dx};
      });
}

template <typename S>
RulePtr<S> softmax_rule() {
  return ad::make_rule<S>(
      "softmax",
      [](Refs<S> in) {
        const auto& x = *in[0];
        Tensor<S> out(x.shape());
        const S mx = x.vec().maxCoeff();
        out.vec() = (x.vec().array() - mx).exp().matrix();
        out.vec() /= out.vec().sum();
        return out;
      },
      [](Refs<S>, const Tensor<S>& out, const Tensor<S>& g) {
        const S dot = g.vec().dot(out.vec());
        return Grads<S>{Tensor<S>(g.shape(), (out.vec().array() * (g.vec().array() - dot)).matrix())};
      });
}

template <typename S>
RulePtr<S> aggregate_rule() {
  return ad::make_rule<S>(
      "aggregate",
      [](Refs<S> in) {
        const std::size_t t = in.size() - 1;
        if (t == 0) throw ShapeError("aggregate: empty prompt list");
        const auto& w = *in[t];
        if (w.size() != Index(t)) {
          throw ShapeError("aggregate: " + std::to_string(t) + " token sets but " + std::to_string(w.size()) + " weights");
        }
        Tensor<S> out(in[0]->shape());
        for (std::size_t i = 0; i < t; ++i) {
          expect_same(in[i]->shape(), in[0]->shape(), "aggregate");
          out.vec() += w[Index(i)] * in[i]->vec();
        }
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const std::size_t t = in.size() - 1;
        const auto& w = *in[t];
        Grads<S> grads;
        Tensor<S> dw(w.shape());
        for (std::size_t i = 0; i < t; ++i) {
          grads.emplace_back(g.shape(), g.vec() * w[Index(i)]);
          dw[Index(i)] = g.vec().dot(in[i]->vec());
        }
        grads.push_back(dw);
        return grads;
      });
}

template <typename S>
RulePtr<S> to_grid_rule() {
  return ad::make_rule<S>(
      "to_grid",
      [](Refs<S> in) {
        const auto& x = *in[0];
        expect_rank(x.shape(), 2, "to_grid");
        const Index m = Index(std::llround(std::sqrt(double(x.dim(0)))));
        if (m * m != x.dim(0)) throw ShapeError("to_grid: token count " + std::to_string(x.dim(0)) + " is not a perfect square");
        Tensor<S> out(Shape{x.dim(1), m, m});
        out.matrix(x.dim(1), m * m) = x.matrix().transpose();
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& x = *in[0];
        Tensor<S> dx(x.shape());
        dx.matrix() = g.matrix(x.dim(1), x.dim(0)).transpose();
        return Grads<S>{dx};
      });
}

template <typename S>
RulePtr<S> lift_rule(int n) {
  return ad::make_rule<S>(
      "lift",
      [n](Refs<S> in) {
        const auto& f = *in[0];
        expect_rank(f.shape(), 3, "lift");
        Shape shape{Index(n)};
        shape.insert(shape.end(), f.shape().begin(), f.shape().end());
        Tensor<S> out(shape);
        out.matrix(n, f.size()).rowwise() = f.vec().transpose();
        return out;
      },
      [n](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> df(in[0]->shape());
        df.vec() = g.matrix(n, df.size()).colwise().sum().transpose();
        return Grads<S>{df};
      });
}

template <typename S>
RulePtr<S> gconv_rule(int n) {
  auto rotations = std::make_shared<const std::vector<Eigen::Matrix<double, 9, 9>>>(filter_rotations(n));
  return ad::make_rule<S>(
      "gconv",
      [n, rotations](Refs<S> in) {
        const auto g = gconv_geometry(in[0]->shape(), in[1]->shape(), in[2]->shape(), n);
        const RowMatrix<S> col = im2col(*in[0], g);
        Tensor<S> out(Shape{g.n, g.co, g.h, g.w});
        for (Index s = 0; s < g.n; ++s) {
          const RowMatrix<S> wt = slot_weights(*in[1], (*rotations)[std::size_t(s)], g, s);
          Eigen::Map<RowMatrix<S>> o(out.data() + s * g.co * g.h * g.w, g.co, g.h * g.w);
          o.noalias() = wt * col;
          o.colwise() += in[2]->vec();
        }
        return out;
      },
      [n, rotations](Refs<S> in, const Tensor<S>&, const Tensor<S>& grad) {
        const auto g = gconv_geometry(in[0]->shape(), in[1]->shape(), in[2]->shape(), n);
        const RowMatrix<S> col = im2col(*in[0], g);
        RowMatrix<S> dcol = RowMatrix<S>::Zero(col.rows(), col.cols());
        Tensor<S> dfilt(in[1]->shape()), dbias(in[2]->shape());
        for (Index s = 0; s < g.n; ++s) {
          const auto& rot = (*rotations)[std::size_t(s)];
          const RowMatrix<S> wt = slot_weights(*in[1], rot, g, s);
          Eigen::Map<const RowMatrix<S>> go(grad.data() + s * g.co * g.h * g.w, g.co, g.h * g.w);
          dcol.noalias() += wt.transpose() * go;
          const RowMatrix<S> dw = go * col.transpose();
          dbias.vec() += go.rowwise().sum();
          const Eigen::Matrix<S, 9, 9> rt = rot.transpose().cast<S>();
          for (Index co = 0; co < g.co; ++co) {
            for (Index ci = 0; ci < g.ci; ++ci) {
              for (Index delta = 0; delta < g.n; ++delta) {
                const Index src_slot = (s + delta) % g.n;
                Eigen::Map<Eigen::Matrix<S, 9, 1>> dpsi(dfilt.data() + ((co * g.ci + ci) * g.n + delta) * kTaps);
                dpsi += rt * dw.row(co).segment((src_slot * g.ci + ci) * kTaps, kTaps).transpose();
              }
            }
          }
        }
        return Grads<S>{col2im(dcol, g), dfilt, dbias};
      });
}

template <typename S>
RulePtr<S> resize_rule(Index rows, Index cols) {
  return ad::make_rule<S>(
      "resize", [rows, cols](Refs<S> in) { return grid::bilinear_resize(*in[0], rows, cols); },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        return Grads<S>{grid::bilinear_resize_adjoint(g, in[0]->dim(-2), in[0]->dim(-1))};
      });
}

template <typename S>
RulePtr<S> mean_axis0_rule() {
  return ad::make_rule<S>(
      "mean_axis0",
      [](Refs<S> in) {
        const auto& x = *in[0];
        if (x.rank() < 2) throw ShapeError("mean_axis0: rank must be >= 2");
        Shape rest(x.shape().begin() + 1, x.shape().end());
        Tensor<S> out(rest);
        out.vec() = x.matrix().colwise().mean().transpose();
        return out;
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const auto& x = *in[0];
        Tensor<S> dx(x.shape());
        dx.matrix().rowwise() = g.vec().transpose() / S(x.dim(0));
        return Grads<S>{dx};
      });
}

template <typename S>
RulePtr<S> reshape_rule(Shape shape) {
  return ad::make_rule<S>(
      "reshape", [shape](Refs<S> in) { return in[0]->reshaped(shape); },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) { return Grads<S>{g.reshaped(in[0]->shape())}; });
}

template <typename S>
RulePtr<S> focal_logits_rule(Tensor<S> target, double alpha, double lambda, double eps) {
  auto tgt = std::make_shared<const Tensor<S>>(std::move(target));
  // Per pixel: p_t = σ(z) on positives, 1-σ(z) on negatives, clamped to [eps, 1-eps];
  // loss = -α_t (1-p_t)^λ log p_t.
  struct Pixel {
    double pt, log_pt, weight, sign;
    bool clamped;
  };
  auto pixel = [alpha, eps](double z, double y) {
    const bool pos = y > 0.5;
    const double s = pos ? 1.0 : -1.0;
    const double sz = s * z;
    double log_pt = sz >= 0 ? -std::log1p(std::exp(-sz)) : sz - std::log1p(std::exp(sz));
    double pt = std::exp(log_pt);
    bool clamped = false;
    if (pt < eps) {
      pt = eps;
      log_pt = std::log(eps);
      clamped = true;
    } else if (pt > 1.0 - eps) {
      pt = 1.0 - eps;
      log_pt = std::log1p(-eps);
      clamped = true;
    }
    return Pixel{pt, log_pt, pos ? alpha : 1.0 - alpha, s, clamped};
  };
  return ad::make_rule<S>(
      "focal_loss",
      [tgt, pixel, lambda](Refs<S> in) {
        expect_same(in[0]->shape(), tgt->shape(), "focal_loss");
        double total = 0.0;
        for (Index i = 0; i < tgt->size(); ++i) {
          const Pixel p = pixel(double((*in[0])[i]), double((*tgt)[i]));
          total += -p.weight * std::pow(1.0 - p.pt, lambda) * p.log_pt;
        }
        return Tensor<S>(Shape{1}, S(total));
      },
      [tgt, pixel, lambda](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        Tensor<S> dz(in[0]->shape());
        const double scale = double(g[0]);
        for (Index i = 0; i < tgt->size(); ++i) {
          const Pixel p = pixel(double((*in[0])[i]), double((*tgt)[i]));
          if (p.clamped) continue;
          const double q = 1.0 - p.pt;
          const double d = -p.weight * p.sign * (-lambda * p.pt * std::pow(q, lambda) * p.log_pt + std::pow(q, lambda + 1.0));
          dz[i] = S(scale * d);
        }
        return Grads<S>{dz};
      });
}

template <typename S>
RulePtr<S> mse_rule() {
  return ad::make_rule<S>(
      "mse",
      [](Refs<S> in) {
        expect_same(in[0]->shape(), in[1]->shape(), "mse");
        return Tensor<S>(Shape{1}, (in[0]->vec() - in[1]->vec()).squaredNorm() / S(in[0]->size()));
      },
      [](Refs<S> in, const Tensor<S>&, const Tensor<S>& g) {
        const S k = S(2) * g[0] / S(in[0]->size());
        Tensor<S> d(in[0]->shape(), (in[0]->vec() - in[1]->vec()) * k);
        Tensor<S> dn(in[0]->shape(), -d.vec());
        return Grads<S>{d, dn};
      });
}

template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b) { return ad::apply(matmul_rule<S>(), {a, b}); }
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b) { return ad::apply(add_rule<S>(), {a, b}); }
template <typename S> Var<S> add_row(const Var<S>& x, const Var<S>& b) { return ad::apply(add_row_rule<S>(), {x, b}); }
template <typename S> Var<S> mul_row(const Var<S>& x, const Var<S>& g) { return ad::apply(mul_row_rule<S>(), {x, g}); }
template <typename S> Var<S> scale(const Var<S>& x, double f) { return ad::apply(scale_rule<S>(f), {x}); }
template <typename S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gain, const Var<S>& shift, double eps) {
  return ad::apply(layer_norm_rule<S>(eps), {x, gain, shift});
}
template <typename S> Var<S> gelu(const Var<S>& x) { return ad::apply(gelu_rule<S>(), {x}); }
template <typename S> Var<S> relu(const Var<S>& x) { return ad::apply(relu_rule<S>(), {x}); }
template <typename S> Var<S> sigmoid(const Var<S>& x) { return ad::apply(sigmoid_rule<S>(), {x}); }
template <typename S>
Var<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int heads) {
  return ad::apply(attention_rule<S>(heads), {q, k, v});
}
template <typename S> Var<S> select_row(const Var<S>& x, Index row) { return ad::apply(select_row_rule<S>(row), {x}); }
template <typename S> Var<S> softmax(const Var<S>& x) { return ad::apply(softmax_rule<S>(), {x}); }
template <typename S>
Var<S> aggregate(const std::vector<Var<S>>& xs, const Var<S>& weights) {
  std::vector<Var<S>> in = xs;
  in.push_back(weights);
  return ad::apply(aggregate_rule<S>(), in);
}
template <typename S> Var<S> to_grid(const Var<S>& t) { return ad::apply(to_grid_rule<S>(), {t}); }
template <typename S> Var<S> lift(const Var<S>& f, int n) { return ad::apply(lift_rule<S>(n), {f}); }
template <typename S>
Var<S> gconv(const Var<S>& x, const Var<S>& filters, const Var<S>& bias, int n) {
  return ad::apply(gconv_rule<S>(n), {x, filters, bias});
}
template <typename S> Var<S> resize(const Var<S>& x, Index r, Index c) { return ad::apply(resize_rule<S>(r, c), {x}); }
template <typename S> Var<S> mean_axis0(const Var<S>& x) { return ad::apply(mean_axis0_rule<S>(), {x}); }
template <typename S> Var<S> reshape(const Var<S>& x, Shape s) { return ad::apply(reshape_rule<S>(std::move(s)), {x}); }
template <typename S>
Var<S> focal_loss_logits(const Var<S>& logits, const Tensor<S>& target, double alpha, double lambda, double eps) {
  return ad::apply(focal_logits_rule<S>(target, alpha, lambda, eps), {logits});
}
template <typename S> Var<S> mse(const Var<S>& a, const Var<S>& b) { return ad::apply(mse_rule<S>(), {a, b}); }

#define SYMDEC_INSTANTIATE_OPS(S)                                                                   \
  template RulePtr<S> matmul_rule<S>();                                                             \
  template RulePtr<S> add_rule<S>();                                                                \
  template RulePtr<S> add_row_rule<S>();                                                            \
  template RulePtr<S> mul_row_rule<S>();                                                            \
  template RulePtr<S> scale_rule<S>(double);                                                        \
  template RulePtr<S> layer_norm_rule<S>(double);                                                   \
  template RulePtr<S> gelu_rule<S>();                                                               \
  template RulePtr<S> relu_rule<S>();                                                               \
  template RulePtr<S> sigmoid_rule<S>();                                                            \
  template RulePtr<S> attention_rule<S>(int);                                                       \
  template RulePtr<S> select_row_rule<S>(Index);                                                    \
  template RulePtr<S> softmax_rule<S>();                                                            \
  template RulePtr<S> aggregate_rule<S>();                                                          \
  template RulePtr<S> to_grid_rule<S>();                                                            \
  template RulePtr<S> lift_rule<S>(int);                                                            \
  template RulePtr<S> gconv_rule<S>(int);                                                           \
  template RulePtr<S> resize_rule<S>(Index, Index);                                                 \
  template RulePtr<S> mean_axis0_rule<S>();                                                         \
  template RulePtr<S> reshape_rule<S>(Shape);                                                       \
  template RulePtr<S> focal_logits_rule<S>(Tensor<S>, double, double, double);                      \
  template RulePtr<S> mse_rule<S>();                                                                \
  template Var<S> matmul<S>(const Var<S>&, const Var<S>&);                                          \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                             \
  template Var<S> add_row<S>(const Var<S>&, const Var<S>&);                                         \
  template Var<S> mul_row<S>(const Var<S>&, const Var<S>&);                                         \
  template Var<S> scale<S>(const Var<S>&, double);                                                  \
  template Var<S> layer_norm<S>(const Var<S>&, const Var<S>&, const Var<S>&, double);               \
  template Var<S> gelu<S>(const Var<S>&);                                                           \
  template Var<S> relu<S>(const Var<S>&);                                                           \
  template Var<S> sigmoid<S>(const Var<S>&);                                                        \
  template Var<S> attention<S>(const Var<S>&, const Var<S>&, const Var<S>&, int);                   \
  template Var<S> select_row<S>(const Var<S>&, Index);                                              \
  template Var<S> softmax<S>(const Var<S>&);                                                        \
  template Var<S> aggregate<S>(const std::vector<Var<S>>&, const Var<S>&);                          \
  template Var<S> to_grid<S>(const Var<S>&);                                                        \
  template Var<S> lift<S>(const Var<S>&, int);                                                      \
  template Var<S> gconv<S>(const Var<S>&, const Var<S>&, const Var<S>&, int);                       \
  template Var<S> resize<S>(const Var<S>&, Index, Index);                                           \
  template Var<S> mean_axis0<S>(const Var<S>&);                                                     \
  template Var<S> reshape<S>(const Var<S>&, Shape);                                                 \
  template Var<S> focal_loss_logits<S>(const Var<S>&, const Tensor<S>&, double, double, double);    \
  template Var<S> mse<S>(const Var<S>&, const Var<S>&);

SYMDEC_INSTANTIATE_OPS(float)
SYMDEC_INSTANTIATE_OPS(double)

}  // namespace symdec::ops
