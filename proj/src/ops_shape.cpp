#include <algorithm>
#include <cmath>
#include <limits>

#include "mixalign/kernels.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis, const char* who) {
  const int nd = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + nd : axis;
  if (a < 0 || a >= nd) {
    throw ShapeError(std::string(who) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit sp;
  for (int i = 0; i < a; ++i) sp.outer *= s[static_cast<std::size_t>(i)];
  sp.len = s[static_cast<std::size_t>(a)];
  for (int i = a + 1; i < nd; ++i) sp.inner *= s[static_cast<std::size_t>(i)];
  return sp;
}

void check_finite(std::span<const double> v, const char* who) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(who) + ": non-finite input");
  }
}

}  // namespace

Tensor softmax(const Tensor& z, int axis) {
  check_finite(z.data(), "softmax");
  const AxisSplit sp = split_at(z.shape(), axis, "softmax");
  const double* x = z.data().data();
  std::vector<double> y(z.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.len; ++k) mx = std::max(mx, x[base + k * sp.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) {
        const double e = std::exp(x[base + k * sp.inner] - mx);
        y[base + k * sp.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < sp.len; ++k) y[base + k * sp.inner] /= total;
    }
  }
  return Tensor::make_result(z.shape(), std::move(y), "softmax", {z}, [sp](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    const double* g = self.grad.data();
    const double* yv = self.value.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) dot += g[base + k * sp.inner] * yv[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t t = base + k * sp.inner;
          gi[t] += yv[t] * (g[t] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& z, int axis) {
  check_finite(z.data(), "log_softmax");
  const AxisSplit sp = split_at(z.shape(), axis, "log_softmax");
  const double* x = z.data().data();
  std::vector<double> y(z.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.len * sp.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.len; ++k) mx = std::max(mx, x[base + k * sp.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < sp.len; ++k) total += std::exp(x[base + k * sp.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t k = 0; k < sp.len; ++k) y[base + k * sp.inner] = x[base + k * sp.inner] - lse;
    }
  }
  return Tensor::make_result(z.shape(), std::move(y), "log_softmax", {z}, [sp](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    const double* g = self.grad.data();
    const double* yv = self.value.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.len * sp.inner + i;
        double gsum = 0.0;
        for (std::size_t k = 0; k < sp.len; ++k) gsum += g[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.len; ++k) {
          const std::size_t t = base + k * sp.inner;
          gi[t] += g[t] - std::exp(yv[t]) * gsum;
        }
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> v(a.data().begin(), a.data().end());
  return Tensor::make_result(std::move(shape), std::move(v), "reshape", {a}, [](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    kernels::active().axpy(self.grad.size(), 1.0, self.grad.data(), in.ensure_grad().data());
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_at(first, axis, "concat");
  const int nd = static_cast<int>(first.size());
  const std::size_t ax = static_cast<std::size_t>(axis < 0 ? axis + nd : axis);
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    lens.push_back(s[ax]);
    total += s[ax];
  }
  Shape out_shape = first;
  out_shape[ax] = total;
  std::vector<double> out(shape_numel(out_shape));
  const std::size_t outer = base.outer, inner = base.inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].data().data();
    const std::size_t chunk = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.begin() + static_cast<long>(o * total * inner + offset));
    }
    offset += chunk;
  }
  return Tensor::make_result(std::move(out_shape), std::move(out), "concat", parts,
                             [lens, outer, inner, total](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      detail::Node& in = *self.inputs[p];
      const std::size_t chunk = lens[p] * inner;
      if (in.requires_grad) {
        double* gi = in.ensure_grad().data();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g = self.grad.data() + o * total * inner + offset;
          for (std::size_t j = 0; j < chunk; ++j) gi[o * chunk + j] += g[j];
        }
      }
      offset += chunk;
    }
  });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> indices) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("index_select: scalar input");
  const std::size_t row = a.numel() / std::max<std::size_t>(s[0], 1);
  for (std::size_t i : indices) {
    if (i >= s[0]) throw ShapeError("index_select: index " + std::to_string(i) + " out of range for " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[0] = indices.size();
  std::vector<double> out(indices.size() * row);
  const double* x = a.data().data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy(x + indices[r] * row, x + (indices[r] + 1) * row, out.begin() + static_cast<long>(r * row));
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::make_result(std::move(out_shape), std::move(out), "index_select", {a},
                             [idx = std::move(idx), row](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < idx.size(); ++r) k.axpy(row, 1.0, self.grad.data() + r * row, gi + idx[r] * row);
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (s.size() != 2 || begin > end || end > s[1]) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") for " + shape_str(s));
  }
  const std::size_t rows = s[0], cols = s[1], width = end - begin;
  std::vector<double> out(rows * width);
  const double* x = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(x + r * cols + begin, x + r * cols + end, out.begin() + static_cast<long>(r * width));
  }
  return Tensor::make_result({rows, width}, std::move(out), "slice_cols", {a},
                             [rows, cols, begin, width](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < width; ++j) gi[r * cols + begin + j] += self.grad[r * width + j];
    }
  });
}

}  // namespace mixalign
