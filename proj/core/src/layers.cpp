#include "hyper3d/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hyper3d/parallel.hpp"

namespace hyper3d::layers {
namespace {

// Spatial layout of one sample for a stride-1 convolution over up to three
// axes. A 2-D convolution is the d = kd = 1 case.
struct ConvGeometry {
  std::size_t h, w, d, ci;
  std::size_t kh, kw, kd;
  std::size_t ph, pw, pd;
  std::size_t oh, ow, od, co;

  std::size_t positions() const { return oh * ow * od; }
  std::size_t patch() const { return kh * kw * kd * ci; }
  std::size_t in_volume() const { return h * w * d * ci; }
  std::size_t out_volume() const { return positions() * co; }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t pad, const char* what) {
  if (in + 2 * pad < k) {
    throw ShapeError(std::string("convolution: kernel larger than padded ") + what);
  }
  return in + 2 * pad - k + 1;
}

ConvGeometry make_geometry(std::size_t h, std::size_t w, std::size_t d, std::size_t ci,
                           std::size_t kh, std::size_t kw, std::size_t kd, std::size_t co,
                           Padding3 pad) {
  ConvGeometry g{h, w, d, ci, kh, kw, kd, pad.h, pad.w, pad.d, 0, 0, 0, co};
  g.oh = out_extent(h, kh, pad.h, "height");
  g.ow = out_extent(w, kw, pad.w, "width");
  g.od = out_extent(d, kd, pad.d, "depth");
  return g;
}

// Row p of `col` holds the receptive field of output position p, ordered
// (kh, kw, kd, ci) to match the kernel's leading axes.
void im2col(const ConvGeometry& g, const double* in, double* col) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      for (std::size_t oz = 0; oz < g.od; ++oz) {
        double* row = col + ((oy * g.ow + ox) * g.od + oz) * patch;
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + a) - static_cast<std::ptrdiff_t>(g.ph);
          for (std::size_t b = 0; b < g.kw; ++b) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + b) - static_cast<std::ptrdiff_t>(g.pw);
            for (std::size_t e = 0; e < g.kd; ++e) {
              const auto iz =
                  static_cast<std::ptrdiff_t>(oz + e) - static_cast<std::ptrdiff_t>(g.pd);
              double* dst = row + ((a * g.kw + b) * g.kd + e) * g.ci;
              if (iy < 0 || ix < 0 || iz < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                  ix >= static_cast<std::ptrdiff_t>(g.w) || iz >= static_cast<std::ptrdiff_t>(g.d)) {
                std::fill(dst, dst + g.ci, 0.0);
              } else {
                const double* src =
                    in + ((static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.d +
                          static_cast<std::size_t>(iz)) *
                             g.ci;
                std::memcpy(dst, src, g.ci * sizeof(double));
              }
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* in_grad) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      for (std::size_t oz = 0; oz < g.od; ++oz) {
        const double* row = col + ((oy * g.ow + ox) * g.od + oz) * patch;
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + a) - static_cast<std::ptrdiff_t>(g.ph);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t b = 0; b < g.kw; ++b) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + b) - static_cast<std::ptrdiff_t>(g.pw);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            for (std::size_t e = 0; e < g.kd; ++e) {
              const auto iz =
                  static_cast<std::ptrdiff_t>(oz + e) - static_cast<std::ptrdiff_t>(g.pd);
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(g.d)) continue;
              const double* src = row + ((a * g.kw + b) * g.kd + e) * g.ci;
              double* dst = in_grad + ((static_cast<std::size_t>(iy) * g.w +
                                        static_cast<std::size_t>(ix)) *
                                           g.d +
                                       static_cast<std::size_t>(iz)) *
                                          g.ci;
              for (std::size_t c = 0; c < g.ci; ++c) dst[c] += src[c];
            }
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                    const ConvGeometry& g, Shape out_shape) {
  const std::size_t batch = input.dim(0);
  Tensor out(std::move(out_shape));
  const ConstMatrixView k(kernel.data(), static_cast<Eigen::Index>(g.patch()),
                          static_cast<Eigen::Index>(g.co));
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(g.co));
  parallel_chunks(batch, [&](int, std::size_t begin, std::size_t end) {
    RowMatrix col(static_cast<Eigen::Index>(g.positions()), static_cast<Eigen::Index>(g.patch()));
    for (std::size_t s = begin; s < end; ++s) {
      im2col(g, input.data() + s * g.in_volume(), col.data());
      MatrixView o(out.data() + s * g.out_volume(), static_cast<Eigen::Index>(g.positions()),
                   static_cast<Eigen::Index>(g.co));
      o.noalias() = col * k;
      o.rowwise() += b;
    }
  });
  return out;
}

void conv_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                   const ConvGeometry& g, Tensor* input_grad, Tensor& kernel_grad,
                   Tensor& bias_grad) {
  const std::size_t batch = input.dim(0);
  const auto P = static_cast<Eigen::Index>(g.positions());
  const auto K = static_cast<Eigen::Index>(g.patch());
  const auto C = static_cast<Eigen::Index>(g.co);
  const ConstMatrixView k(kernel.data(), K, C);
  if (input_grad) *input_grad = Tensor(input.shape());

  const int parts = chunk_count(batch);
  std::vector<RowMatrix> kernel_parts(static_cast<std::size_t>(parts), RowMatrix::Zero(K, C));
  std::vector<Eigen::RowVectorXd> bias_parts(static_cast<std::size_t>(parts),
                                             Eigen::RowVectorXd::Zero(C));
  parallel_chunks(batch, [&](int t, std::size_t begin, std::size_t end) {
    RowMatrix col(P, K);
    RowMatrix dcol(P, K);
    RowMatrix& dk = kernel_parts[static_cast<std::size_t>(t)];
    Eigen::RowVectorXd& db = bias_parts[static_cast<std::size_t>(t)];
    for (std::size_t s = begin; s < end; ++s) {
      im2col(g, input.data() + s * g.in_volume(), col.data());
      const ConstMatrixView go(output_grad.data() + s * g.out_volume(), P, C);
      dk.noalias() += col.transpose() * go;
      db += go.colwise().sum();
      if (input_grad) {
        dcol.noalias() = go * k.transpose();
        col2im_add(g, dcol.data(), input_grad->data() + s * g.in_volume());
      }
    }
  });
  MatrixView dk_total(kernel_grad.data(), K, C);
  Eigen::Map<Eigen::RowVectorXd> db_total(bias_grad.data(), C);
  for (int t = 0; t < parts; ++t) {
    dk_total += kernel_parts[static_cast<std::size_t>(t)];
    db_total += bias_parts[static_cast<std::size_t>(t)];
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

void require_shape(const Tensor& t, const Shape& shape, const char* what) {
  if (t.shape() != shape) {
    throw ShapeError(std::string(what) + ": expected " + to_string(shape) + ", got " +
                     to_string(t.shape()));
  }
}

ConvGeometry conv3d_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                             Padding3 pad) {
  require_rank(input, 5, "conv3d input");
  require_rank(kernel, 5, "conv3d kernel");
  if (kernel.dim(3) != input.dim(4)) throw ShapeError("conv3d: kernel/input channel mismatch");
  require_shape(bias, {kernel.dim(4)}, "conv3d bias");
  return make_geometry(input.dim(1), input.dim(2), input.dim(3), input.dim(4), kernel.dim(0),
                       kernel.dim(1), kernel.dim(2), kernel.dim(4), pad);
}

ConvGeometry conv2d_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                             std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (kernel.dim(2) != input.dim(3)) throw ShapeError("conv2d: kernel/input channel mismatch");
  require_shape(bias, {kernel.dim(3)}, "conv2d bias");
  return make_geometry(input.dim(1), input.dim(2), 1, input.dim(3), kernel.dim(0), kernel.dim(1),
                       1, kernel.dim(3), {padding, padding, 0});
}

}  // namespace

Tensor conv3d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding3 pad) {
  const ConvGeometry g = conv3d_geometry(input, kernel, bias, pad);
  return conv_forward(input, kernel, bias, g, {input.dim(0), g.oh, g.ow, g.od, g.co});
}

void conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                     Padding3 pad, Tensor* input_grad, Tensor& kernel_grad, Tensor& bias_grad) {
  const ConvGeometry g = conv3d_geometry(input, kernel, bias_grad, pad);
  require_shape(output_grad, {input.dim(0), g.oh, g.ow, g.od, g.co}, "conv3d output grad");
  require_shape(kernel_grad, kernel.shape(), "conv3d kernel grad");
  conv_backward(input, kernel, output_grad, g, input_grad, kernel_grad, bias_grad);
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      std::size_t padding) {
  const ConvGeometry g = conv2d_geometry(input, kernel, bias, padding);
  return conv_forward(input, kernel, bias, g, {input.dim(0), g.oh, g.ow, g.co});
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                     std::size_t padding, Tensor* input_grad, Tensor& kernel_grad,
                     Tensor& bias_grad) {
  const ConvGeometry g = conv2d_geometry(input, kernel, bias_grad, padding);
  require_shape(output_grad, {input.dim(0), g.oh, g.ow, g.co}, "conv2d output grad");
  require_shape(kernel_grad, kernel.shape(), "conv2d kernel grad");
  conv_backward(input, kernel, output_grad, g, input_grad, kernel_grad, bias_grad);
}

Tensor depthwise2d_forward(const Tensor& input, const Tensor& kernel, std::size_t padding) {
  require_rank(input, 4, "depthwise input");
  require_rank(kernel, 3, "depthwise kernel");
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (kernel.dim(2) != c) throw ShapeError("depthwise: kernel/input channel mismatch");
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
  const std::size_t oh = out_extent(h, kh, padding, "height");
  const std::size_t ow = out_extent(w, kw, padding, "width");
  Tensor out({batch, oh, ow, c});
  parallel_chunks(batch, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double* o = out.data() + ((s * oh + oy) * ow + ox) * c;
          for (std::size_t a = 0; a < kh; ++a) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + a) - static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t b = 0; b < kw; ++b) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(ox + b) - static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const double* in = input.data() + ((s * h + static_cast<std::size_t>(iy)) * w +
                                                 static_cast<std::size_t>(ix)) *
                                                    c;
              const double* k = kernel.data() + (a * kw + b) * c;
              for (std::size_t ch = 0; ch < c; ++ch) o[ch] += in[ch] * k[ch];
            }
          }
        }
      }
    }
  });
  return out;
}

void depthwise2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& output_grad,
                          std::size_t padding, Tensor* input_grad, Tensor& kernel_grad) {
  require_rank(input, 4, "depthwise input");
  const std::size_t batch = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
  const std::size_t oh = out_extent(h, kh, padding, "height");
  const std::size_t ow = out_extent(w, kw, padding, "width");
  require_shape(output_grad, {batch, oh, ow, c}, "depthwise output grad");
  require_shape(kernel_grad, kernel.shape(), "depthwise kernel grad");
  if (input_grad) *input_grad = Tensor(input.shape());

  const int parts = chunk_count(batch);
  std::vector<std::vector<double>> kernel_parts(static_cast<std::size_t>(parts),
                                                std::vector<double>(kernel.size(), 0.0));
  parallel_chunks(batch, [&](int t, std::size_t begin, std::size_t end) {
    double* dk_base = kernel_parts[static_cast<std::size_t>(t)].data();
    for (std::size_t s = begin; s < end; ++s) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double* go = output_grad.data() + ((s * oh + oy) * ow + ox) * c;
          for (std::size_t a = 0; a < kh; ++a) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + a) - static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t b = 0; b < kw; ++b) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(ox + b) - static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t offset =
                  ((s * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c;
              const double* in = input.data() + offset;
              const double* k = kernel.data() + (a * kw + b) * c;
              double* dk = dk_base + (a * kw + b) * c;
              for (std::size_t ch = 0; ch < c; ++ch) dk[ch] += go[ch] * in[ch];
              if (input_grad) {
                double* gi = input_grad->data() + offset;
                for (std::size_t ch = 0; ch < c; ++ch) gi[ch] += go[ch] * k[ch];
              }
            }
          }
        }
      }
    }
  });
  for (const auto& part : kernel_parts) {
    for (std::size_t i = 0; i < part.size(); ++i) kernel_grad[i] += part[i];
  }
}

Tensor pointwise_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "pointwise weights");
  const std::size_t ci = weights.dim(0), co = weights.dim(1);
  if (input.rank() < 2 || input.shape().back() != ci) {
    throw ShapeError("pointwise: input " + to_string(input.shape()) + " does not end in " +
                     std::to_string(ci));
  }
  require_shape(bias, {co}, "pointwise bias");
  const std::size_t batch = input.dim(0);
  const std::size_t rows = input.size() / (batch * ci);
  Shape out_shape = input.shape();
  out_shape.back() = co;
  Tensor out(std::move(out_shape));
  const ConstMatrixView wm(weights.data(), static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(co));
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(co));
  // One product per sample keeps each sample's result independent of batch size.
  parallel_chunks(batch, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const ConstMatrixView in(input.data() + s * rows * ci, static_cast<Eigen::Index>(rows),
                               static_cast<Eigen::Index>(ci));
      MatrixView o(out.data() + s * rows * co, static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(co));
      o.noalias() = in * wm;
      o.rowwise() += b;
    }
  });
  return out;
}

void pointwise_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad,
                        Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad) {
  const std::size_t ci = weights.dim(0), co = weights.dim(1);
  const std::size_t batch = input.dim(0);
  const std::size_t rows = input.size() / (batch * ci);
  if (output_grad.size() != batch * rows * co) throw ShapeError("pointwise: output grad size");
  require_shape(weight_grad, weights.shape(), "pointwise weight grad");
  if (input_grad) *input_grad = Tensor(input.shape());
  const auto R = static_cast<Eigen::Index>(rows);
  const auto I = static_cast<Eigen::Index>(ci);
  const auto O = static_cast<Eigen::Index>(co);
  const ConstMatrixView wm(weights.data(), I, O);

  const int parts = chunk_count(batch);
  std::vector<RowMatrix> weight_parts(static_cast<std::size_t>(parts), RowMatrix::Zero(I, O));
  std::vector<Eigen::RowVectorXd> bias_parts(static_cast<std::size_t>(parts),
                                             Eigen::RowVectorXd::Zero(O));
  parallel_chunks(batch, [&](int t, std::size_t begin, std::size_t end) {
    RowMatrix& dw = weight_parts[static_cast<std::size_t>(t)];
    Eigen::RowVectorXd& db = bias_parts[static_cast<std::size_t>(t)];
    for (std::size_t s = begin; s < end; ++s) {
      const ConstMatrixView in(input.data() + s * rows * ci, R, I);
      const ConstMatrixView go(output_grad.data() + s * rows * co, R, O);
      dw.noalias() += in.transpose() * go;
      db += go.colwise().sum();
      if (input_grad) {
        MatrixView gi(input_grad->data() + s * rows * ci, R, I);
        gi.noalias() = go * wm.transpose();
      }
    }
  });
  MatrixView dw_total(weight_grad.data(), I, O);
  Eigen::Map<Eigen::RowVectorXd> db_total(bias_grad.data(), O);
  for (int t = 0; t < parts; ++t) {
    dw_total += weight_parts[static_cast<std::size_t>(t)];
    db_total += bias_parts[static_cast<std::size_t>(t)];
  }
}

Tensor sepconv2d_forward(const Tensor& input, const Tensor& depthwise, const Tensor& pointwise,
                         const Tensor& bias, std::size_t padding) {
  return pointwise_forward(depthwise2d_forward(input, depthwise, padding), pointwise, bias);
}

void relu_inplace(Tensor& t) {
  for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

Tensor relu_backward(const Tensor& output, const Tensor& output_grad) {
  if (output.shape() != output_grad.shape()) throw ShapeError("relu: gradient shape mismatch");
  Tensor grad(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) grad[i] = output[i] > 0.0 ? output_grad[i] : 0.0;
  return grad;
}

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         const Tensor& running_mean, const Tensor& running_var, Mode mode,
                         double epsilon, BatchNormCache* cache) {
  const std::size_t c = input.shape().back();
  for (const Tensor* p : {&gamma, &beta, &running_mean, &running_var}) {
    require_shape(*p, {c}, "batchnorm parameter");
  }
  const std::size_t rows = input.size() / c;
  if (rows == 0) throw ShapeError("batchnorm: empty input");

  std::vector<double> mean(c, 0.0), variance(c, 0.0), inv_std(c);
  if (mode == Mode::kTrain) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = input.data() + r * c;
      for (std::size_t k = 0; k < c; ++k) mean[k] += x[k];
    }
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = input.data() + r * c;
      for (std::size_t k = 0; k < c; ++k) {
        const double dev = x[k] - mean[k];
        variance[k] += dev * dev;
      }
    }
    for (double& v : variance) v /= static_cast<double>(rows);
  } else {
    std::copy(running_mean.values().begin(), running_mean.values().end(), mean.begin());
    std::copy(running_var.values().begin(), running_var.values().end(), variance.begin());
  }
  for (std::size_t k = 0; k < c; ++k) inv_std[k] = 1.0 / std::sqrt(variance[k] + epsilon);

  Tensor out(input.shape());
  Tensor normalized(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * c;
    double* xh = normalized.data() + r * c;
    double* y = out.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      xh[k] = (x[k] - mean[k]) * inv_std[k];
      y[k] = gamma[k] * xh[k] + beta[k];
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    if (mode == Mode::kTrain) {
      cache->batch = {std::move(mean), std::move(variance)};
    } else {
      cache->batch = {};
    }
  }
  return out;
}

void batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& output_grad,
                        Tensor* input_grad, Tensor& gamma_grad, Tensor& beta_grad) {
  const Tensor& xhat = cache.normalized;
  if (xhat.shape() != output_grad.shape()) throw ShapeError("batchnorm: gradient shape mismatch");
  const std::size_t c = xhat.shape().back();
  const std::size_t rows = xhat.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dy = output_grad.data() + r * c;
    const double* xh = xhat.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      sum_dy[k] += dy[k];
      sum_dy_xhat[k] += dy[k] * xh[k];
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    gamma_grad[k] += sum_dy_xhat[k];
    beta_grad[k] += sum_dy[k];
  }
  if (!input_grad) return;
  *input_grad = Tensor(xhat.shape());
  const double m = static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dy = output_grad.data() + r * c;
    const double* xh = xhat.data() + r * c;
    double* dx = input_grad->data() + r * c;
    if (cache.mode == Mode::kTrain) {
      for (std::size_t k = 0; k < c; ++k) {
        dx[k] = gamma[k] * cache.inv_std[k] *
                (dy[k] - sum_dy[k] / m - xh[k] * sum_dy_xhat[k] / m);
      }
    } else {
      for (std::size_t k = 0; k < c; ++k) dx[k] = gamma[k] * cache.inv_std[k] * dy[k];
    }
  }
}

void update_running_stats(const BatchStats& batch, double momentum, Tensor& running_mean,
                          Tensor& running_var) {
  for (std::size_t k = 0; k < running_mean.size(); ++k) {
    running_mean[k] = momentum * running_mean[k] + (1.0 - momentum) * batch.mean[k];
    running_var[k] = momentum * running_var[k] + (1.0 - momentum) * batch.variance[k];
  }
}

Tensor dropout_forward(const Tensor& input, double rate, Mode mode, Rng* rng,
                       std::vector<std::uint8_t>* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) {
    if (mask) mask->assign(input.size(), 1);
    return input;
  }
  if (!rng) throw std::invalid_argument("dropout: train mode needs a random source");
  const double scale = 1.0 / (1.0 - rate);
  std::vector<std::uint8_t> keep(input.size());
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    keep[i] = rng->uniform() >= rate ? 1 : 0;
    out[i] = keep[i] ? input[i] * scale : 0.0;
  }
  if (mask) *mask = std::move(keep);
  return out;
}

Tensor dropout_backward(const Tensor& output_grad, const std::vector<std::uint8_t>& mask,
                        double rate, Mode mode) {
  if (mode == Mode::kEval || rate == 0.0) return output_grad;
  if (mask.size() != output_grad.size()) throw ShapeError("dropout: mask size mismatch");
  const double scale = 1.0 / (1.0 - rate);
  Tensor grad(output_grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = mask[i] ? output_grad[i] * scale : 0.0;
  return grad;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0) throw ShapeError("concat: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: axis mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back();
  const std::size_t rows = ca ? a.size() / ca : b.size() / cb;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  Tensor out(std::move(shape));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t channels) {
  const std::size_t total = t.shape().back();
  if (channels > total) throw ShapeError("split_channels: split point beyond channel axis");
  const std::size_t rest = total - channels;
  const std::size_t rows = t.size() / total;
  Shape sa = t.shape(), sb = t.shape();
  sa.back() = channels;
  sb.back() = rest;
  Tensor a(std::move(sa)), b(std::move(sb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(t.data() + r * total, channels, a.data() + r * channels);
    std::copy_n(t.data() + r * total + channels, rest, b.data() + r * rest);
  }
  return {std::move(a), std::move(b)};
}

Tensor dense_forward(const Tensor& input, const Tensor& weights) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t batch = input.dim(0), k = input.dim(1), o = weights.dim(1);
  if (weights.dim(0) != k) throw ShapeError("dense: input/weight mismatch");
  Tensor out({batch, o});
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t j = 0; j < o; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += input[s * k + i] * weights[i * o + j];
      out[s * o + j] = acc;
    }
  }
  return out;
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad,
                    Tensor* input_grad, Tensor& weight_grad) {
  const std::size_t batch = input.dim(0), k = input.dim(1), o = weights.dim(1);
  require_shape(output_grad, {batch, o}, "dense output grad");
  if (input_grad) *input_grad = Tensor(input.shape());
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < o; ++j) {
        weight_grad[i * o + j] += input[s * k + i] * output_grad[s * o + j];
        acc += output_grad[s * o + j] * weights[i * o + j];
      }
      if (input_grad) (*input_grad)[s * k + i] = acc;
    }
  }
}

}  // namespace hyper3d::layers
