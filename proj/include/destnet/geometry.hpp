#pragma once

#include <Eigen/Core>

#include "destnet/tensor.hpp"

namespace destnet {

/// 8-vector of homography perturbation parameters in normalized coordinates;
/// all zeros is the identity warp.
using WarpParams = Eigen::Matrix<double, 8, 1>;

/// 3x3 projective transform over normalized coordinates, scaled so that
/// h(2,2) == 1.
using Homography = Eigen::Matrix3d;

/// Sampling grid: Tensor[N,H,W,2] of (x,y) source locations in normalized
/// coordinates [-1,1], pixel-center anchored (align-corners).
using SampleGrid = Tensor;

/// H(p) = [[1+p0, p1, p2], [p3, 1+p4, p5], [p6, p7, 1]].
Homography params_to_homography(const WarpParams& p);

/// Additive parameter composition: p + dp.
WarpParams compose_additive(const WarpParams& p, const WarpParams& dp);

/// Map one normalized point through a homography with perspective division.
Eigen::Vector2d apply_homography(const Homography& h, const Eigen::Vector2d& pt);

/// Exact 4-point direct linear transform. No three source or destination
/// points may be collinear.
Homography corners_to_homography(const Eigen::Matrix<double, 4, 2>& src,
                                 const Eigen::Matrix<double, 4, 2>& dst);

Homography invert(const Homography& h);

/// Half-extent of the normalized <-> pixel mapping for a raster of n pixels.
inline double half_extent(Index n) { return 0.5 * static_cast<double>(n - 1); }

Eigen::Vector2d pixel_to_norm(const Eigen::Vector2d& px, Index h, Index w);
Eigen::Vector2d norm_to_pixel(const Eigen::Vector2d& uv, Index h, Index w);

/// Canonical normalized meshgrid coordinate for pixel j on a raster of n:
/// (2j - (n-1)) / (n-1).
double mesh_coord(Index j, Index n);

/// Differentiable grid generator. p is [N,8] (or [8], treated as N=1);
/// output is [N,H,W,2]. Each output pixel's normalized coordinates are mapped
/// through H(p) with perspective division; a divisor with |w| < 1e-8 raises a
/// degenerate-warp error naming the pixel.
SampleGrid generate_grid(const Tensor& p, Index h, Index w);

/// Differentiable mapping of K fixed normalized points through H(p).
/// p [N,8] -> [N,K,2].
Tensor apply_warp(const Tensor& p, const Eigen::Matrix<double, Eigen::Dynamic, 2>& points);

/// Differentiable bilinear sampling with zero padding outside the raster.
/// image [N,C,H,W], grid [N,Ho,Wo,2] -> [N,C,Ho,Wo]. Gradients flow to both
/// the image and the grid.
Tensor bilinear_sample(const Tensor& image, const SampleGrid& grid);

/// Non-recorded sampling grid for an arbitrary homography (data pipeline).
SampleGrid grid_from_homography(const Homography& h, Index rows, Index cols);

/// Warp a single [C,H,W] image by a homography (non-recorded convenience).
Tensor warp_image(const Tensor& image, const Homography& h);

}  // namespace destnet
