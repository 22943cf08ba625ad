#pragma once

#include <span>
#include <vector>

#include "destnet/rng.hpp"
#include "destnet/tensor.hpp"

namespace destnet {

/// 2-D cross-correlation (no kernel flip). input [N,C,H,W], kernel [K,C,R,S].
/// Output raster is floor((H + 2*padding - R)/stride) + 1, so strided layers
/// drop any bottom/right remainder.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1,
              int padding = 0);

/// 2x2 non-overlapping max pooling; H and W must be even. Gradient routes to
/// the first maximum in row-major scan order within each block.
Tensor maxpool2(const Tensor& input);

/// Affine map: input [N,D] x weight [D,O] + bias [O].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor tanh_act(const Tensor& input);

/// Elementwise max(0, x); subgradient 0 at x == 0.
Tensor relu_act(const Tensor& input);

/// Inverted dropout: in training, keeps each element with probability
/// keep_prob and scales survivors by 1/keep_prob; in inference it is the
/// identity. keep_prob must lie in (0, 1].
Tensor dropout(const Tensor& input, double keep_prob, bool training, Rng& rng);

/// Mean over the batch of -log softmax(logits)[label]. logits [N,K].
Tensor softmax_xent(const Tensor& logits, std::span<const int> labels);

/// Mean over elements of: 0.5*d^2 if |d| < 1 else |d| - 0.5, d = pred - target.
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

/// Elementwise sum of two same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise scaling by a constant.
Tensor scale(const Tensor& input, double factor);

/// Concatenate rank-2 tensors [N,d_i] along columns.
Tensor concat_cols(std::span<const Tensor> parts);

/// Reshape to a same-size shape (copying; gradient is the inverse reshape).
Tensor reshape(const Tensor& input, Shape shape);

/// Collapse all trailing axes: [N, ...] -> [N, rest].
Tensor flatten(const Tensor& input);

}  // namespace destnet
