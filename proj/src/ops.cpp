#include "destnet/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

namespace destnet {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Graph* recording_for(std::initializer_list<const Tensor*> inputs) {
  Graph* g = active_graph();
  if (!g) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return g;
  }
  return nullptr;
}

Tensor make_output(Shape shape, Graph* g) {
  Tensor out = Tensor::zeros(std::move(shape), g != nullptr);
  out.set_graph(g);
  return out;
}

bool grad_pending(const std::shared_ptr<TensorImpl>& impl) {
  return impl->grad.size() > 0;
}

Array& ensure_grad(const std::shared_ptr<TensorImpl>& impl) {
  if (impl->grad.size() == 0) impl->grad = Array::Zero(impl->value.size());
  return impl->grad;
}

void require_rank(const Tensor& t, Index rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

// Gathers padded windows: cols(c*R*S + r*S + s, oy*Wo + ox) = plane(c, y, x).
void im2col(const double* plane, Index c_in, Index h, Index w, Index r, Index s,
            Index stride, Index pad, Index ho, Index wo, Eigen::MatrixXd& cols) {
  cols.setZero();
  for (Index c = 0; c < c_in; ++c) {
    const double* src = plane + c * h * w;
    for (Index ky = 0; ky < r; ++ky) {
      for (Index kx = 0; kx < s; ++kx) {
        const Index row = (c * r + ky) * s + kx;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          double* dst = cols.data() + row;  // column-major: stride cols.rows()
          const Index rows = cols.rows();
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            dst[(oy * wo + ox) * rows] = src[iy * w + ix];
          }
        }
      }
    }
  }
}

// Scatter-add of dCols back onto the (padded) input plane.
void col2im_add(const Eigen::MatrixXd& dcols, Index c_in, Index h, Index w, Index r,
                Index s, Index stride, Index pad, Index ho, Index wo, double* dplane) {
  const Index rows = dcols.rows();
  for (Index c = 0; c < c_in; ++c) {
    double* dst = dplane + c * h * w;
    for (Index ky = 0; ky < r; ++ky) {
      for (Index kx = 0; kx < s; ++kx) {
        const Index row = (c * r + ky) * s + kx;
        const double* src = dcols.data() + row;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            dst[iy * w + ix] += src[(oy * wo + ox) * rows];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (stride < 1) throw DimensionError("conv2d stride must be positive");
  if (padding < 0) throw DimensionError("conv2d padding must be non-negative");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index k = kernel.dim(0), kc = kernel.dim(1), r = kernel.dim(2), s = kernel.dim(3);
  if (kc != c) {
    throw DimensionError("conv2d channel mismatch: input C=" + std::to_string(c) +
                         " vs kernel C=" + std::to_string(kc));
  }
  if (h + 2 * padding < r || w + 2 * padding < s) {
    throw DimensionError("conv2d kernel " + std::to_string(r) + "x" + std::to_string(s) +
                         " exceeds padded raster " + std::to_string(h + 2 * padding) + "x" +
                         std::to_string(w + 2 * padding));
  }
  const Index ho = (h + 2 * padding - r) / stride + 1;
  const Index wo = (w + 2 * padding - s) / stride + 1;

  Graph* g = recording_for({&input, &kernel});
  Tensor out = make_output({n, k, ho, wo}, g);

  const Index crs = c * r * s;
  Eigen::MatrixXd cols(crs, ho * wo);
  CMapRM kmat(kernel.value().data(), k, crs);
  for (Index i = 0; i < n; ++i) {
    im2col(input.value().data() + i * c * h * w, c, h, w, r, s, stride, padding, ho, wo, cols);
    MapRM(out.value().data() + i * k * ho * wo, k, ho * wo).noalias() = kmat * cols;
  }

  if (g) {
    auto in_impl = input.impl();
    auto k_impl = kernel.impl();
    auto out_impl = out.impl();
    int st = stride, pd = padding;
    g->record([=]() {
      if (!grad_pending(out_impl)) return;
      const Index crs2 = c * r * s;
      Eigen::MatrixXd cols2(crs2, ho * wo);
      CMapRM kmat2(k_impl->value.data(), k, crs2);
      const bool need_din = in_impl->requires_grad;
      const bool need_dk = k_impl->requires_grad;
      if (need_din) ensure_grad(in_impl);
      if (need_dk) ensure_grad(k_impl);
      Eigen::MatrixXd dcols;
      for (Index i = 0; i < n; ++i) {
        CMapRM dout(out_impl->grad.data() + i * k * ho * wo, k, ho * wo);
        if (need_dk) {
          im2col(in_impl->value.data() + i * c * h * w, c, h, w, r, s, st, pd, ho, wo, cols2);
          MapRM(k_impl->grad.data(), k, crs2).noalias() += dout * cols2.transpose();
        }
        if (need_din) {
          dcols.noalias() = kmat2.transpose() * dout;
          col2im_add(dcols, c, h, w, r, s, st, pd, ho, wo,
                     in_impl->grad.data() + i * c * h * w);
        }
      }
    });
  }
  return out;
}

Tensor maxpool2(const Tensor& input) {
  require_rank(input, 4, "maxpool2 input");
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2 needs even spatial extents, got " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  const Index ho = h / 2, wo = w / 2;
  Graph* g = recording_for({&input});
  Tensor out = make_output({n, c, ho, wo}, g);

  std::vector<Index> argmax(static_cast<size_t>(n * c * ho * wo));
  const double* src = input.value().data();
  double* dst = out.value().data();
  Index oi = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    const double* p = src + plane * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox, ++oi) {
        Index best = (2 * oy) * w + 2 * ox;
        double bestv = p[best];
        // first occurrence wins on ties, row-major scan
        const Index cand1 = best + 1, cand2 = best + w, cand3 = best + w + 1;
        if (p[cand1] > bestv) { bestv = p[cand1]; best = cand1; }
        if (p[cand2] > bestv) { bestv = p[cand2]; best = cand2; }
        if (p[cand3] > bestv) { bestv = p[cand3]; best = cand3; }
        dst[oi] = bestv;
        argmax[static_cast<size_t>(oi)] = plane * h * w + best;
      }
    }
  }

  if (g) {
    auto in_impl = input.impl();
    auto out_impl = out.impl();
    g->record([in_impl, out_impl, argmax = std::move(argmax)]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      Array& din = ensure_grad(in_impl);
      const Array& dout = out_impl->grad;
      for (Index i = 0; i < dout.size(); ++i) din[argmax[static_cast<size_t>(i)]] += dout[i];
    });
  }
  return out;
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  require_rank(bias, 1, "dense bias");
  const Index n = input.dim(0), d = input.dim(1);
  const Index wd = weight.dim(0), o = weight.dim(1);
  if (wd != d || bias.dim(0) != o) {
    throw DimensionError("dense shape mismatch: input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()) + ", bias " +
                         shape_str(bias.shape()));
  }
  Graph* g = recording_for({&input, &weight, &bias});
  Tensor out = make_output({n, o}, g);

  CMapRM a(input.value().data(), n, d);
  CMapRM wm(weight.value().data(), d, o);
  MapRM y(out.value().data(), n, o);
  y.noalias() = a * wm;
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), o);

  if (g) {
    auto in_impl = input.impl(), w_impl = weight.impl(), b_impl = bias.impl();
    auto out_impl = out.impl();
    g->record([=]() {
      if (!grad_pending(out_impl)) return;
      CMapRM dy(out_impl->grad.data(), n, o);
      if (in_impl->requires_grad) {
        ensure_grad(in_impl);
        MapRM(in_impl->grad.data(), n, d).noalias() +=
            dy * CMapRM(w_impl->value.data(), d, o).transpose();
      }
      if (w_impl->requires_grad) {
        ensure_grad(w_impl);
        MapRM(w_impl->grad.data(), d, o).noalias() +=
            CMapRM(in_impl->value.data(), n, d).transpose() * dy;
      }
      if (b_impl->requires_grad) {
        ensure_grad(b_impl);
        Eigen::Map<Eigen::RowVectorXd>(b_impl->grad.data(), o) += dy.colwise().sum();
      }
    });
  }
  return out;
}

Tensor tanh_act(const Tensor& input) {
  Graph* g = recording_for({&input});
  Tensor out = make_output(input.shape(), g);
  out.value() = input.value().tanh();
  if (g) {
    auto in_impl = input.impl(), out_impl = out.impl();
    g->record([in_impl, out_impl]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      ensure_grad(in_impl) += out_impl->grad * (1.0 - out_impl->value.square());
    });
  }
  return out;
}

Tensor relu_act(const Tensor& input) {
  Graph* g = recording_for({&input});
  Tensor out = make_output(input.shape(), g);
  out.value() = input.value().max(0.0);
  if (g) {
    auto in_impl = input.impl(), out_impl = out.impl();
    g->record([in_impl, out_impl]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      ensure_grad(in_impl) +=
          out_impl->grad * (in_impl->value > 0.0).cast<double>();
    });
  }
  return out;
}

Tensor dropout(const Tensor& input, double keep_prob, bool training, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("dropout keep probability must lie in (0,1], got " +
                      std::to_string(keep_prob));
  }
  if (!training || keep_prob == 1.0) return input;

  Graph* g = recording_for({&input});
  Tensor out = make_output(input.shape(), g);
  Array mask(input.numel());
  const double inv = 1.0 / keep_prob;
  for (Index i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < keep_prob ? inv : 0.0;
  }
  out.value() = input.value() * mask;
  if (g) {
    auto in_impl = input.impl(), out_impl = out.impl();
    g->record([in_impl, out_impl, mask = std::move(mask)]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      ensure_grad(in_impl) += out_impl->grad * mask;
    });
  }
  return out;
}

Tensor softmax_xent(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_xent logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("softmax_xent labels length " + std::to_string(labels.size()) +
                         " vs batch " + std::to_string(n));
  }
  for (Index i = 0; i < n; ++i) {
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= k) {
      throw DataError("label " + std::to_string(labels[static_cast<size_t>(i)]) +
                      " out of range [0," + std::to_string(k) + ") at row " + std::to_string(i));
    }
  }

  Graph* g = recording_for({&logits});
  Tensor out = make_output({1}, g);

  Array probs(n * k);
  double loss = 0.0;
  const double* z = logits.value().data();
  for (Index i = 0; i < n; ++i) {
    const double* row = z + i * k;
    double m = row[0];
    for (Index j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (Index j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - m);
      probs[i * k + j] = e;
      sum += e;
    }
    for (Index j = 0; j < k; ++j) probs[i * k + j] /= sum;
    loss -= std::log(probs[i * k + labels[static_cast<size_t>(i)]]);
  }
  out.value()[0] = loss / static_cast<double>(n);

  if (g) {
    auto in_impl = logits.impl(), out_impl = out.impl();
    std::vector<int> lab(labels.begin(), labels.end());
    g->record([in_impl, out_impl, probs = std::move(probs), lab = std::move(lab), n, k]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      const double gscale = out_impl->grad[0] / static_cast<double>(n);
      Array& din = ensure_grad(in_impl);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < k; ++j) {
          const double onehot = (j == lab[static_cast<size_t>(i)]) ? 1.0 : 0.0;
          din[i * k + j] += gscale * (probs[i * k + j] - onehot);
        }
      }
    });
  }
  return out;
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1 shape mismatch: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  Graph* g = recording_for({&pred, &target});
  Tensor out = make_output({1}, g);
  Array diff = pred.value() - target.value();
  const Index m = diff.size();
  double loss = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double a = std::abs(diff[i]);
    loss += a < 1.0 ? 0.5 * diff[i] * diff[i] : a - 0.5;
  }
  out.value()[0] = loss / static_cast<double>(m);

  if (g) {
    auto p_impl = pred.impl(), t_impl = target.impl(), out_impl = out.impl();
    g->record([p_impl, t_impl, out_impl, diff = std::move(diff), m]() {
      if (!grad_pending(out_impl)) return;
      const double gscale = out_impl->grad[0] / static_cast<double>(m);
      Array dd(m);
      for (Index i = 0; i < m; ++i) {
        dd[i] = std::abs(diff[i]) < 1.0 ? diff[i] : (diff[i] > 0 ? 1.0 : -1.0);
      }
      if (p_impl->requires_grad) ensure_grad(p_impl) += gscale * dd;
      if (t_impl->requires_grad) ensure_grad(t_impl) -= gscale * dd;
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Graph* g = recording_for({&a, &b});
  Tensor out = make_output(a.shape(), g);
  out.value() = a.value() + b.value();
  if (g) {
    auto a_impl = a.impl(), b_impl = b.impl(), out_impl = out.impl();
    g->record([a_impl, b_impl, out_impl]() {
      if (!grad_pending(out_impl)) return;
      if (a_impl->requires_grad) ensure_grad(a_impl) += out_impl->grad;
      if (b_impl->requires_grad) ensure_grad(b_impl) += out_impl->grad;
    });
  }
  return out;
}

Tensor scale(const Tensor& input, double factor) {
  Graph* g = recording_for({&input});
  Tensor out = make_output(input.shape(), g);
  out.value() = input.value() * factor;
  if (g) {
    auto in_impl = input.impl(), out_impl = out.impl();
    g->record([in_impl, out_impl, factor]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      ensure_grad(in_impl) += factor * out_impl->grad;
    });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols on empty list");
  const Index n = parts[0].dim(0);
  Index total = 0;
  for (const Tensor& t : parts) {
    require_rank(t, 2, "concat_cols part");
    if (t.dim(0) != n) {
      throw DimensionError("concat_cols row mismatch: " + std::to_string(t.dim(0)) +
                           " vs " + std::to_string(n));
    }
    total += t.dim(1);
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& t : parts) ptrs.push_back(&t);
  Graph* g = active_graph();
  bool any_rg = false;
  for (const Tensor* t : ptrs) any_rg |= t->requires_grad();
  if (!any_rg) g = nullptr;

  Tensor out = make_output({n, total}, g);
  MapRM y(out.value().data(), n, total);
  Index col = 0;
  for (const Tensor& t : parts) {
    y.middleCols(col, t.dim(1)) = CMapRM(t.value().data(), n, t.dim(1));
    col += t.dim(1);
  }
  if (g) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<Index> widths;
    for (const Tensor& t : parts) {
      impls.push_back(t.impl());
      widths.push_back(t.dim(1));
    }
    auto out_impl = out.impl();
    g->record([impls = std::move(impls), widths = std::move(widths), out_impl, n, total]() {
      if (!grad_pending(out_impl)) return;
      CMapRM dy(out_impl->grad.data(), n, total);
      Index col2 = 0;
      for (size_t i = 0; i < impls.size(); ++i) {
        if (impls[i]->requires_grad) {
          ensure_grad(impls[i]);
          MapRM(impls[i]->grad.data(), n, widths[i]) += dy.middleCols(col2, widths[i]);
        }
        col2 += widths[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw DimensionError("reshape from " + shape_str(input.shape()) + " to " +
                         shape_str(shape) + " changes element count");
  }
  Graph* g = recording_for({&input});
  Tensor out = make_output(std::move(shape), g);
  out.value() = input.value();
  if (g) {
    auto in_impl = input.impl(), out_impl = out.impl();
    g->record([in_impl, out_impl]() {
      if (!grad_pending(out_impl) || !in_impl->requires_grad) return;
      ensure_grad(in_impl) += out_impl->grad;
    });
  }
  return out;
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 2) throw DimensionError("flatten needs rank >= 2");
  return reshape(input, {input.dim(0), input.numel() / input.dim(0)});
}

}  // namespace destnet
