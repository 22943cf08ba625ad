#include "destnet/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace destnet {

namespace {

constexpr double kMinPerspectiveDiv = 1e-8;
constexpr double kMinDeterminant = 1e-12;

// Normalized -> pixel. Round-off from the normalized round trip is absorbed
// by snapping to the integer lattice within a few ulps of the half-extent;
// the band (~1e-13 px) is far below any meaningful sub-pixel offset, and it
// is what makes identity warps resample exactly.
inline double unnormalize(double coord, double half) {
  double px = coord * half + half;
  const double snapped = std::nearbyint(px);
  const double tol = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, half);
  if (std::abs(px - snapped) <= tol) px = snapped;
  return px;
}

struct PView {
  const double* p;
  double x(double nx, double ny, double den) const {
    return ((1.0 + p[0]) * nx + p[1] * ny + p[2]) / den;
  }
  double y(double nx, double ny, double den) const {
    return (p[3] * nx + (1.0 + p[4]) * ny + p[5]) / den;
  }
  double den(double nx, double ny) const { return p[6] * nx + p[7] * ny + 1.0; }
};

void check_params_shape(const Tensor& p, Index& n, bool& flat) {
  if (p.rank() == 1 && p.dim(0) == 8) {
    n = 1;
    flat = true;
  } else if (p.rank() == 2 && p.dim(1) == 8) {
    n = p.dim(0);
    flat = false;
  } else {
    throw DimensionError("warp parameters must be [8] or [N,8], got " + shape_str(p.shape()));
  }
}

}  // namespace

Homography params_to_homography(const WarpParams& p) {
  if (!p.allFinite()) throw NumericError("non-finite warp parameters");
  Homography h;
  h << 1.0 + p[0], p[1], p[2],
       p[3], 1.0 + p[4], p[5],
       p[6], p[7], 1.0;
  return h;
}

WarpParams compose_additive(const WarpParams& p, const WarpParams& dp) { return p + dp; }

Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& pt) {
  const Eigen::Vector3d v = h * Eigen::Vector3d(pt.x(), pt.y(), 1.0);
  if (std::abs(v.z()) < kMinPerspectiveDiv) {
    throw GeometryError("degenerate perspective division at point (" +
                        std::to_string(pt.x()) + ", " + std::to_string(pt.y()) + ")");
  }
  return {v.x() / v.z(), v.y() / v.z()};
}

Homography corners_to_homography(const Eigen::Matrix<double, 4, 2>& src,
                                 const Eigen::Matrix<double, 4, 2>& dst) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src(i, 0), y = src(i, 1);
    const double u = dst(i, 0), v = dst(i, 1);
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b[2 * i] = u;
    b[2 * i + 1] = v;
  }
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 8, 8>> qr(a);
  if (qr.rank() < 8) {
    throw GeometryError("degenerate corner configuration: 4-point system is singular");
  }
  const Eigen::Matrix<double, 8, 1> t = qr.solve(b);
  Homography h;
  h << t[0], t[1], t[2],
       t[3], t[4], t[5],
       t[6], t[7], 1.0;
  return h;
}

Homography invert(const Homography& h) {
  if (std::abs(h.determinant()) < kMinDeterminant) {
    throw GeometryError("homography is near-singular, |det| < 1e-12");
  }
  Homography inv = h.inverse();
  if (std::abs(inv(2, 2)) < kMinDeterminant) {
    throw GeometryError("inverse homography cannot be normalized, h33 ~ 0");
  }
  inv /= inv(2, 2);
  return inv;
}

Eigen::Vector2d pixel_to_norm(const Eigen::Vector2d& px, Index h, Index w) {
  return {(px.x() - half_extent(w)) / half_extent(w),
          (px.y() - half_extent(h)) / half_extent(h)};
}

Eigen::Vector2d norm_to_pixel(const Eigen::Vector2d& uv, Index h, Index w) {
  return {uv.x() * half_extent(w) + half_extent(w),
          uv.y() * half_extent(h) + half_extent(h)};
}

double mesh_coord(Index j, Index n) {
  return static_cast<double>(2 * j - (n - 1)) / static_cast<double>(n - 1);
}

namespace {

// Shared forward/backward for projecting a fixed point list through H(p).
// Points are supplied in normalized coordinates; `pixel_named` controls the
// degenerate-warp error text (pixel (row,col) vs point k).
Tensor project_points(const Tensor& p, const Eigen::Matrix<double, Eigen::Dynamic, 2>& pts,
                      Shape out_shape, Index grid_cols, bool pixel_named) {
  Index n = 0;
  bool flat = false;
  check_params_shape(p, n, flat);
  const Index k = pts.rows();

  Graph* g = active_graph();
  if (!p.requires_grad()) g = nullptr;
  Tensor out = Tensor::zeros(out_shape, g != nullptr);
  out.set_graph(g);

  const double* pdata = p.value().data();
  double* o = out.value().data();
  for (Index i = 0; i < n; ++i) {
    PView pv{pdata + i * 8};
    for (Index j = 0; j < k; ++j) {
      const double nx = pts(j, 0), ny = pts(j, 1);
      const double den = pv.den(nx, ny);
      if (std::abs(den) < kMinPerspectiveDiv) {
        if (pixel_named) {
          throw GeometryError("degenerate warp at pixel (" + std::to_string(j / grid_cols) +
                              ", " + std::to_string(j % grid_cols) + "), |w| < 1e-8");
        }
        throw GeometryError("degenerate warp at point " + std::to_string(j) + ", |w| < 1e-8");
      }
      o[(i * k + j) * 2] = pv.x(nx, ny, den);
      o[(i * k + j) * 2 + 1] = pv.y(nx, ny, den);
    }
  }

  if (g) {
    auto p_impl = p.impl();
    auto out_impl = out.impl();
    Eigen::Matrix<double, Eigen::Dynamic, 2> pts_copy = pts;
    g->record([p_impl, out_impl, pts_copy = std::move(pts_copy), n, k]() {
      if (out_impl->grad.size() == 0 || !p_impl->requires_grad) return;
      if (p_impl->grad.size() == 0) p_impl->grad = Array::Zero(p_impl->value.size());
      const double* pd = p_impl->value.data();
      const double* ov = out_impl->value.data();
      const double* og = out_impl->grad.data();
      double* pg = p_impl->grad.data();
      for (Index i = 0; i < n; ++i) {
        PView pv{pd + i * 8};
        double* dp = pg + i * 8;
        for (Index j = 0; j < k; ++j) {
          const double nx = pts_copy(j, 0), ny = pts_copy(j, 1);
          const double den = pv.den(nx, ny);
          const double inv = 1.0 / den;
          const double u = ov[(i * k + j) * 2];
          const double v = ov[(i * k + j) * 2 + 1];
          const double gu = og[(i * k + j) * 2];
          const double gv = og[(i * k + j) * 2 + 1];
          dp[0] += gu * nx * inv;
          dp[1] += gu * ny * inv;
          dp[2] += gu * inv;
          dp[3] += gv * nx * inv;
          dp[4] += gv * ny * inv;
          dp[5] += gv * inv;
          const double mix = (gu * u + gv * v) * inv;
          dp[6] -= mix * nx;
          dp[7] -= mix * ny;
        }
      }
    });
  }
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> mesh_points(Index rows, Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, 2> pts(rows * cols, 2);
  for (Index i = 0; i < rows; ++i) {
    const double y = mesh_coord(i, rows);
    for (Index j = 0; j < cols; ++j) {
      pts(i * cols + j, 0) = mesh_coord(j, cols);
      pts(i * cols + j, 1) = y;
    }
  }
  return pts;
}

}  // namespace

SampleGrid generate_grid(const Tensor& p, Index h, Index w) {
  if (h < 2 || w < 2) {
    throw DimensionError("generate_grid raster must be at least 2x2, got " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  Index n = 0;
  bool flat = false;
  check_params_shape(p, n, flat);
  return project_points(p, mesh_points(h, w), {n, h, w, 2}, w, /*pixel_named=*/true);
}

Tensor apply_warp(const Tensor& p, const Eigen::Matrix<double, Eigen::Dynamic, 2>& points) {
  Index n = 0;
  bool flat = false;
  check_params_shape(p, n, flat);
  return project_points(p, points, {n, points.rows(), 2}, points.rows(),
                        /*pixel_named=*/false);
}

Tensor bilinear_sample(const Tensor& image, const SampleGrid& grid) {
  if (image.rank() != 4) {
    throw DimensionError("bilinear_sample image must be [N,C,H,W], got " +
                         shape_str(image.shape()));
  }
  if (grid.rank() != 4 || grid.dim(3) != 2) {
    throw DimensionError("bilinear_sample grid must be [N,H,W,2], got " +
                         shape_str(grid.shape()));
  }
  if (grid.dim(0) != image.dim(0)) {
    throw DimensionError("bilinear_sample batch mismatch: image N=" +
                         std::to_string(image.dim(0)) + " vs grid N=" +
                         std::to_string(grid.dim(0)));
  }
  const Index n = image.dim(0), c = image.dim(1), hi = image.dim(2), wi = image.dim(3);
  const Index ho = grid.dim(1), wo = grid.dim(2);

  Graph* g = active_graph();
  if (!image.requires_grad() && !grid.requires_grad()) g = nullptr;
  Tensor out = Tensor::zeros({n, c, ho, wo}, g != nullptr);
  out.set_graph(g);

  const double hh = half_extent(hi), hw = half_extent(wi);
  const double* img = image.value().data();
  const double* gr = grid.value().data();
  double* o = out.value().data();

  auto sample_plane = [&](Index ni) {
    const double* gslice = gr + ni * ho * wo * 2;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox) {
        const Index gi = (oy * wo + ox) * 2;
        const double px = unnormalize(gslice[gi], hw);
        const double py = unnormalize(gslice[gi + 1], hh);
        const double fx = std::floor(px), fy = std::floor(py);
        const Index x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
        const double wx = px - fx, wy = py - fy;
        const bool x0v = x0 >= 0 && x0 < wi, x1v = x0 + 1 >= 0 && x0 + 1 < wi;
        const bool y0v = y0 >= 0 && y0 < hi, y1v = y0 + 1 >= 0 && y0 + 1 < hi;
        for (Index ch = 0; ch < c; ++ch) {
          const double* plane = img + (ni * c + ch) * hi * wi;
          const double v00 = (x0v && y0v) ? plane[y0 * wi + x0] : 0.0;
          const double v10 = (x1v && y0v) ? plane[y0 * wi + x0 + 1] : 0.0;
          const double v01 = (x0v && y1v) ? plane[(y0 + 1) * wi + x0] : 0.0;
          const double v11 = (x1v && y1v) ? plane[(y0 + 1) * wi + x0 + 1] : 0.0;
          o[((ni * c + ch) * ho + oy) * wo + ox] =
              (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) +
              wy * ((1.0 - wx) * v01 + wx * v11);
        }
      }
    }
  };
  for (Index i = 0; i < n; ++i) sample_plane(i);

  if (g) {
    auto img_impl = image.impl();
    auto grid_impl = grid.impl();
    auto out_impl = out.impl();
    g->record([img_impl, grid_impl, out_impl, n, c, hi, wi, ho, wo, hh, hw]() {
      if (out_impl->grad.size() == 0) return;
      const bool need_dimg = img_impl->requires_grad;
      const bool need_dgrid = grid_impl->requires_grad;
      if (!need_dimg && !need_dgrid) return;
      if (need_dimg && img_impl->grad.size() == 0)
        img_impl->grad = Array::Zero(img_impl->value.size());
      if (need_dgrid && grid_impl->grad.size() == 0)
        grid_impl->grad = Array::Zero(grid_impl->value.size());
      const double* img = img_impl->value.data();
      const double* gr = grid_impl->value.data();
      const double* og = out_impl->grad.data();
      for (Index ni = 0; ni < n; ++ni) {
        const double* gslice = gr + ni * ho * wo * 2;
        for (Index oy = 0; oy < ho; ++oy) {
          for (Index ox = 0; ox < wo; ++ox) {
            const Index gi = (oy * wo + ox) * 2;
            const double px = unnormalize(gslice[gi], hw);
            const double py = unnormalize(gslice[gi + 1], hh);
            const double fx = std::floor(px), fy = std::floor(py);
            const Index x0 = static_cast<Index>(fx), y0 = static_cast<Index>(fy);
            const double wx = px - fx, wy = py - fy;
            const bool x0v = x0 >= 0 && x0 < wi, x1v = x0 + 1 >= 0 && x0 + 1 < wi;
            const bool y0v = y0 >= 0 && y0 < hi, y1v = y0 + 1 >= 0 && y0 + 1 < hi;
            double dpx = 0.0, dpy = 0.0;
            for (Index ch = 0; ch < c; ++ch) {
              const double go = og[((ni * c + ch) * ho + oy) * wo + ox];
              if (go == 0.0) continue;
              const double* plane = img + (ni * c + ch) * hi * wi;
              const double v00 = (x0v && y0v) ? plane[y0 * wi + x0] : 0.0;
              const double v10 = (x1v && y0v) ? plane[y0 * wi + x0 + 1] : 0.0;
              const double v01 = (x0v && y1v) ? plane[(y0 + 1) * wi + x0] : 0.0;
              const double v11 = (x1v && y1v) ? plane[(y0 + 1) * wi + x0 + 1] : 0.0;
              if (need_dimg) {
                double* dplane = img_impl->grad.data() + (ni * c + ch) * hi * wi;
                if (x0v && y0v) dplane[y0 * wi + x0] += go * (1.0 - wx) * (1.0 - wy);
                if (x1v && y0v) dplane[y0 * wi + x0 + 1] += go * wx * (1.0 - wy);
                if (x0v && y1v) dplane[(y0 + 1) * wi + x0] += go * (1.0 - wx) * wy;
                if (x1v && y1v) dplane[(y0 + 1) * wi + x0 + 1] += go * wx * wy;
              }
              if (need_dgrid) {
                dpx += go * ((1.0 - wy) * (v10 - v00) + wy * (v11 - v01));
                dpy += go * ((1.0 - wx) * (v01 - v00) + wx * (v11 - v10));
              }
            }
            if (need_dgrid) {
              grid_impl->grad[ni * ho * wo * 2 + gi] += dpx * hw;
              grid_impl->grad[ni * ho * wo * 2 + gi + 1] += dpy * hh;
            }
          }
        }
      }
    });
  }
  return out;
}

SampleGrid grid_from_homography(const Homography& h, Index rows, Index cols) {
  if (rows < 2 || cols < 2) {
    throw DimensionError("grid raster must be at least 2x2");
  }
  Tensor grid = Tensor::zeros({1, rows, cols, 2});
  double* o = grid.value().data();
  for (Index i = 0; i < rows; ++i) {
    const double y = mesh_coord(i, rows);
    for (Index j = 0; j < cols; ++j) {
      const double x = mesh_coord(j, cols);
      const double den = h(2, 0) * x + h(2, 1) * y + h(2, 2);
      if (std::abs(den) < kMinPerspectiveDiv) {
        throw GeometryError("degenerate warp at pixel (" + std::to_string(i) + ", " +
                            std::to_string(j) + "), |w| < 1e-8");
      }
      o[(i * cols + j) * 2] = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / den;
      o[(i * cols + j) * 2 + 1] = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / den;
    }
  }
  return grid;
}

Tensor warp_image(const Tensor& image, const Homography& h) {
  if (image.rank() != 3) {
    throw DimensionError("warp_image expects [C,H,W], got " + shape_str(image.shape()));
  }
  const Index c = image.dim(0), rows = image.dim(1), cols = image.dim(2);
  Tensor batched = Tensor::from_array({1, c, rows, cols}, image.value());
  Tensor warped = bilinear_sample(batched, grid_from_homography(h, rows, cols));
  return Tensor::from_array({c, rows, cols}, warped.value());
}

}  // namespace destnet
