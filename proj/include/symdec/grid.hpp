#ifndef SYMDEC_GRID_HPP
#define SYMDEC_GRID_HPP

#include <cmath>
#include <numbers>

#include "symdec/tensor.hpp"

/// Planar grid operations. Every function here treats the last two axes of a tensor as the
/// spatial plane (rows x, columns y) and all leading axes as independent channels.
namespace symdec::grid {

/// Angle in degrees, normalised to [0, 360).
class RotationAngle {
 public:
  explicit RotationAngle(double degrees = 0.0) {
    double d = std::fmod(degrees, 360.0);
    if (d < 0) d += 360.0;
    const double nearest = std::round(d / 90.0) * 90.0;
    if (std::abs(d - nearest) < 1e-9) d = nearest;
    if (d >= 360.0) d -= 360.0;
    degrees_ = d;
  }

  static RotationAngle quarter_turns(int k) { return RotationAngle(90.0 * k); }

  double degrees() const { return degrees_; }
  double radians() const { return degrees_ * std::numbers::pi / 180.0; }
  bool exact() const { return std::fmod(degrees_, 90.0) == 0.0; }
  /// Number of quarter turns; meaningful only when exact().
  int quarter_turns() const { return int(degrees_ / 90.0) % 4; }

 private:
  double degrees_ = 0.0;
};

inline Index plane_count(const Shape& shape) {
  if (shape.size() < 2) throw ShapeError("grid op needs rank >= 2, got " + shape_string(shape));
  return shape_size(shape) / (shape[shape.size() - 1] * shape[shape.size() - 2]);
}

inline void require_square(const Shape& shape, const char* op) {
  if (shape.size() < 2 || shape[shape.size() - 1] != shape[shape.size() - 2]) {
    throw ShapeError(std::string(op) + " requires a square grid, got " + shape_string(shape));
  }
}

/// Exact rotation by k quarter turns: out[x, y] = in[r_{-k·90°}(x, y)] about ((N-1)/2, (N-1)/2).
template <typename Scalar>
Tensor<Scalar> rotate90(const Tensor<Scalar>& grid, int k) {
  require_square(grid.shape(), "rotate90");
  k = ((k % 4) + 4) % 4;
  if (k == 0) return grid;
  const Index n = grid.dim(-1);
  const Index planes = plane_count(grid.shape());
  Tensor<Scalar> out(grid.shape());
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = grid.data() + p * n * n;
    Scalar* dst = out.data() + p * n * n;
    for (Index x = 0; x < n; ++x) {
      for (Index y = 0; y < n; ++y) {
        Index sx, sy;
        switch (k) {
          case 1: sx = y; sy = n - 1 - x; break;
          case 2: sx = n - 1 - x; sy = n - 1 - y; break;
          default: sx = n - 1 - y; sy = x; break;
        }
        dst[x * n + y] = src[sx * n + sy];
      }
    }
  }
  return out;
}

/// Bilinear sample of one plane at continuous (x, y); taps outside the plane read `pad`.
template <typename Scalar>
Scalar sample_bilinear(const Scalar* plane, Index rows, Index cols, double x, double y, Scalar pad) {
  const double rx = std::round(x), ry = std::round(y);
  if (std::abs(x - rx) < 1e-9) x = rx;
  if (std::abs(y - ry) < 1e-9) y = ry;
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const Index x0 = Index(fx0), y0 = Index(fy0);
  const double ax = x - fx0, ay = y - fy0;
  auto tap = [&](Index i, Index j) -> double {
    if (i < 0 || j < 0 || i >= rows || j >= cols) return double(pad);
    return double(plane[i * cols + j]);
  };
  double v = (1 - ax) * (1 - ay) * tap(x0, y0);
  if (ay != 0) v += (1 - ax) * ay * tap(x0, y0 + 1);
  if (ax != 0) v += ax * (1 - ay) * tap(x0 + 1, y0);
  if (ax != 0 && ay != 0) v += ax * ay * tap(x0 + 1, y0 + 1);
  return Scalar(v);
}

/// Rotation by an arbitrary angle with bilinear resampling of the inverse-mapped coordinate.
template <typename Scalar>
Tensor<Scalar> rotate_bilinear(const Tensor<Scalar>& grid, RotationAngle angle, Scalar pad = Scalar(0)) {
  require_square(grid.shape(), "rotate_bilinear");
  const Index n = grid.dim(-1);
  const Index planes = plane_count(grid.shape());
  const double c = 0.5 * double(n - 1);
  const double cs = std::cos(angle.radians()), sn = std::sin(angle.radians());
  Tensor<Scalar> out(grid.shape());
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = grid.data() + p * n * n;
    Scalar* dst = out.data() + p * n * n;
    for (Index x = 0; x < n; ++x) {
      for (Index y = 0; y < n; ++y) {
        const double u = double(x) - c, v = double(y) - c;
        const double sx = cs * u + sn * v + c;
        const double sy = -sn * u + cs * v + c;
        dst[x * n + y] = sample_bilinear(src, n, n, sx, sy, pad);
      }
    }
  }
  return out;
}

/// rotate90 for quarter turns, rotate_bilinear otherwise.
template <typename Scalar>
Tensor<Scalar> rotate(const Tensor<Scalar>& grid, RotationAngle angle, Scalar pad = Scalar(0)) {
  return angle.exact() ? rotate90(grid, angle.quarter_turns()) : rotate_bilinear(grid, angle, pad);
}

/// Mirror along the column axis.
template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& grid) {
  const Index rows = grid.dim(-2), cols = grid.dim(-1);
  const Index planes = plane_count(grid.shape());
  Tensor<Scalar> out(grid.shape());
  for (Index p = 0; p < planes; ++p) {
    for (Index x = 0; x < rows; ++x) {
      for (Index y = 0; y < cols; ++y) {
        out[(p * rows + x) * cols + y] = grid[(p * rows + x) * cols + (cols - 1 - y)];
      }
    }
  }
  return out;
}

/// One output sample of a corners-aligned linear interpolation: value = in[lo] + frac·(in[lo+1] - in[lo]).
struct InterpTap {
  Index lo = 0;
  double frac = 0.0;
};

/// Output sample i sits at input coordinate i·(in-1)/(out-1), computed from exact integer ratios.
inline std::vector<InterpTap> interp_taps(Index in, Index out) {
  std::vector<InterpTap> taps(static_cast<std::size_t>(out));
  if (in == 1 || out == 1) return taps;
  const Index den = out - 1;
  for (Index i = 0; i < out; ++i) {
    const Index num = i * (in - 1);
    taps[std::size_t(i)] = {num / den, double(num % den) / double(den)};
  }
  return taps;
}

/// Separable bilinear resize of every plane to rows x cols (corners aligned).
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& grid, Index rows, Index cols) {
  const Index h = grid.dim(-2), w = grid.dim(-1);
  if (rows == h && cols == w) return grid;
  const Index planes = plane_count(grid.shape());
  Shape out_shape = grid.shape();
  out_shape[out_shape.size() - 2] = rows;
  out_shape[out_shape.size() - 1] = cols;
  const auto th = interp_taps(h, rows), tw = interp_taps(w, cols);
  Tensor<Scalar> out(out_shape);
  std::vector<Scalar> tmp(std::size_t(rows * w));
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = grid.data() + p * h * w;
    Scalar* dst = out.data() + p * rows * cols;
    for (Index i = 0; i < rows; ++i) {
      const auto [lo, frac] = th[std::size_t(i)];
      const Scalar f = Scalar(frac);
      for (Index y = 0; y < w; ++y) {
        const Scalar a = src[lo * w + y];
        tmp[std::size_t(i * w + y)] = frac == 0.0 ? a : a + f * (src[(lo + 1) * w + y] - a);
      }
    }
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        const auto [lo, frac] = tw[std::size_t(j)];
        const Scalar a = tmp[std::size_t(i * w + lo)];
        dst[i * cols + j] = frac == 0.0 ? a : a + Scalar(frac) * (tmp[std::size_t(i * w + lo + 1)] - a);
      }
    }
  }
  return out;
}

/// Adjoint of bilinear_resize: scatters a [.., rows, cols] cotangent back onto [.., h, w].
template <typename Scalar>
Tensor<Scalar> bilinear_resize_adjoint(const Tensor<Scalar>& cot, Index h, Index w) {
  const Index rows = cot.dim(-2), cols = cot.dim(-1);
  Shape in_shape = cot.shape();
  in_shape[in_shape.size() - 2] = h;
  in_shape[in_shape.size() - 1] = w;
  if (rows == h && cols == w) return cot;
  const Index planes = plane_count(cot.shape());
  const auto th = interp_taps(h, rows), tw = interp_taps(w, cols);
  Tensor<Scalar> out(in_shape);
  std::vector<Scalar> tmp(std::size_t(rows * w));
  for (Index p = 0; p < planes; ++p) {
    const Scalar* g = cot.data() + p * rows * cols;
    Scalar* dst = out.data() + p * h * w;
    std::fill(tmp.begin(), tmp.end(), Scalar(0));
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        const auto [lo, frac] = tw[std::size_t(j)];
        const Scalar v = g[i * cols + j];
        tmp[std::size_t(i * w + lo)] += Scalar(1 - frac) * v;
        if (frac != 0.0) tmp[std::size_t(i * w + lo + 1)] += Scalar(frac) * v;
      }
    }
    for (Index i = 0; i < rows; ++i) {
      const auto [lo, frac] = th[std::size_t(i)];
      for (Index y = 0; y < w; ++y) {
        const Scalar v = tmp[std::size_t(i * w + y)];
        dst[lo * w + y] += Scalar(1 - frac) * v;
        if (frac != 0.0) dst[(lo + 1) * w + y] += Scalar(frac) * v;
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& grid, int factor) {
  if (factor < 1) throw ShapeError("bilinear_upsample: factor must be >= 1");
  return bilinear_resize(grid, grid.dim(-2) * factor, grid.dim(-1) * factor);
}

}  // namespace symdec::grid

#endif  // SYMDEC_GRID_HPP
