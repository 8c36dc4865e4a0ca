#include <memory>

#include "mixalign/kernels.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

using kernels::Trans;

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  kernels::active().gemm(Trans::No, Trans::No, m, n, k, 1.0, a.data().data(), k, b.data().data(), n,
                         0.0, out.data(), n);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, n, k](detail::Node& self) {
    detail::Node& na = *self.inputs[0];
    detail::Node& nb = *self.inputs[1];
    const auto& kt = kernels::active();
    if (na.requires_grad) {
      // dA = G * B^T
      kt.gemm(Trans::No, Trans::Yes, m, k, n, 1.0, self.grad.data(), n, nb.value.data(), n, 1.0,
              na.ensure_grad().data(), k);
    }
    if (nb.requires_grad) {
      // dB = A^T * G
      kt.gemm(Trans::Yes, Trans::No, k, n, m, 1.0, na.value.data(), k, self.grad.data(), n, 1.0,
              nb.ensure_grad().data(), n);
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

void im2col(const ConvGeometry& g, const double* image, double* cols) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* image) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions options) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 4 || ks.size() != 4) {
    throw ShapeError("conv2d: expected 4-D input and kernel, got " + shape_str(is) + " and " + shape_str(ks));
  }
  if (is[1] != ks[1]) {
    throw ShapeError("conv2d: input channels " + shape_str(is) + " do not match kernel " + shape_str(ks));
  }
  if (options.stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  const std::size_t ph = is[2] + 2 * options.padding;
  const std::size_t pw = is[3] + 2 * options.padding;
  if (ks[2] > ph || ks[3] > pw) {
    throw ShapeError("conv2d: kernel " + shape_str(ks) + " larger than padded input " + shape_str(is));
  }
  ConvGeometry g{is[0], is[1], is[2], is[3], ks[0], ks[2], ks[3], options.stride, options.padding,
                 (ph - ks[2]) / options.stride + 1, (pw - ks[3]) / options.stride + 1};

  const std::size_t patch = g.patch();
  const std::size_t opix = g.out_pixels();
  // Patches are kept for the backward pass only when one will happen.
  const bool keep = GradMode::enabled() && (input.requires_grad() || kernel.requires_grad());
  auto cols = std::make_shared<std::vector<double>>((keep ? g.batch : 1) * patch * opix);
  std::vector<double> out(g.batch * g.out_channels * opix);
  const auto& kt = kernels::active();
  const double* x = input.data().data();
  const double* w = kernel.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    double* cb = cols->data() + (keep ? b * patch * opix : 0);
    im2col(g, x + b * g.channels * g.height * g.width, cb);
    kt.gemm(Trans::No, Trans::No, g.out_channels, opix, patch, 1.0, w, patch, cb, opix, 0.0,
            out.data() + b * g.out_channels * opix, opix);
  }
  Shape out_shape{g.batch, g.out_channels, g.out_h, g.out_w};
  return Tensor::make_result(std::move(out_shape), std::move(out), "conv2d", {input, kernel},
                             [g, cols](detail::Node& self) {
    detail::Node& ni = *self.inputs[0];
    detail::Node& nk = *self.inputs[1];
    const auto& kt = kernels::active();
    const std::size_t patch = g.patch();
    const std::size_t opix = g.out_pixels();
    std::vector<double> dcols;
    if (ni.requires_grad) dcols.resize(patch * opix);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* gout = self.grad.data() + b * g.out_channels * opix;
      const double* cb = cols->data() + b * patch * opix;
      if (nk.requires_grad) {
        kt.gemm(Trans::No, Trans::Yes, g.out_channels, patch, opix, 1.0, gout, opix, cb, opix, 1.0,
                nk.ensure_grad().data(), patch);
      }
      if (ni.requires_grad) {
        kt.gemm(Trans::Yes, Trans::No, patch, opix, g.out_channels, 1.0, nk.value.data(), patch, gout,
                opix, 0.0, dcols.data(), opix);
        col2im_add(g, dcols.data(), ni.ensure_grad().data() + b * g.channels * g.height * g.width);
      }
    }
  });
}

Tensor avg_pool2d(const Tensor& input, std::size_t window) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw ShapeError("avg_pool2d: expected 4-D input, got " + shape_str(s));
  if (window == 0 || s[2] % window != 0 || s[3] % window != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) + " does not tile " + shape_str(s));
  }
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t oh = h / window, ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(planes * oh * ow, 0.0);
  const double* x = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x + p * h * w;
    double* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < h; ++y) {
      double* drow = dst + (y / window) * ow;
      const double* srow = src + y * w;
      for (std::size_t xx = 0; xx < w; ++xx) drow[xx / window] += srow[xx];
    }
    for (std::size_t i = 0; i < oh * ow; ++i) dst[i] *= inv;
  }
  return Tensor::make_result({s[0], s[1], oh, ow}, std::move(out), "avg_pool2d", {input},
                             [planes, h, w, ow, oh, window, inv](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    for (std::size_t p = 0; p < planes; ++p) {
      const double* g = self.grad.data() + p * oh * ow;
      double* dst = gi + p * h * w;
      for (std::size_t y = 0; y < h; ++y) {
        const double* grow = g + (y / window) * ow;
        for (std::size_t xx = 0; xx < w; ++xx) dst[y * w + xx] += grow[xx / window] * inv;
      }
    }
  });
}

}  // namespace mixalign
