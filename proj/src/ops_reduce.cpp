#include <algorithm>
#include <limits>

#include "mixalign/kernels.hpp"
#include "mixalign/tensor.hpp"
#include "ops_internal.hpp"

namespace mixalign {

std::vector<std::size_t> detail::normalize_axes(const Axes& axes, std::size_t ndim) {
  std::vector<std::size_t> out;
  if (axes.empty()) {
    for (std::size_t i = 0; i < ndim; ++i) out.push_back(i);
    return out;
  }
  for (int axis : axes) {
    const int a = axis < 0 ? axis + static_cast<int>(ndim) : axis;
    if (a < 0 || a >= static_cast<int>(ndim)) {
      throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(ndim));
    }
    out.push_back(static_cast<std::size_t>(a));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

struct ReducePlan {
  Shape keep_shape;
  Shape out_shape;
  std::size_t count = 1;
  detail::BroadcastPlan rows;  // "a" is the input, "b" the kept-dims output
};

ReducePlan plan_reduce(const Shape& in, const Axes& axes, bool keep_dims) {
  const auto ax = detail::normalize_axes(axes, in.size());
  ReducePlan p;
  p.keep_shape = in;
  for (std::size_t a : ax) {
    if (in[a] == 0) throw ShapeError("reduce: empty reduction axis in " + shape_str(in));
    p.count *= in[a];
    p.keep_shape[a] = 1;
  }
  if (keep_dims) {
    p.out_shape = p.keep_shape;
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (!std::binary_search(ax.begin(), ax.end(), i)) p.out_shape.push_back(in[i]);
    }
  }
  p.rows = detail::make_broadcast_plan(in, p.keep_shape);
  return p;
}

Tensor reduce_sum(const Tensor& a, const Axes& axes, bool keep_dims, double factor,
                  const char* name) {
  ReducePlan p = plan_reduce(a.shape(), axes, keep_dims);
  std::vector<double> out(shape_numel(p.keep_shape), 0.0);
  const double* x = a.data().data();
  const auto& k = kernels::active();
  detail::for_each_row(p.rows, [&](std::size_t o, std::size_t, std::size_t ib, std::size_t n,
                                   std::size_t, std::size_t sb) {
    if (sb == 0) {
      out[ib] += k.sum(n, x + o);
    } else {
      k.axpy(n, 1.0, x + o, out.data() + ib);
    }
  });
  if (factor != 1.0) {
    for (double& v : out) v *= factor;
  }
  Shape out_shape = p.out_shape;
  return Tensor::make_result(
      std::move(out_shape), std::move(out), name, {a},
      [factor, rows = std::move(p.rows)](detail::Node& self) {
        detail::Node& in = *self.inputs[0];
        if (!in.requires_grad) return;
        double* gi = in.ensure_grad().data();
        const double* g = self.grad.data();
        const auto& k = kernels::active();
        detail::for_each_row(rows, [&](std::size_t o, std::size_t, std::size_t ib, std::size_t n,
                                       std::size_t, std::size_t sb) {
          if (sb == 0) {
            const double v = g[ib] * factor;
            for (std::size_t j = 0; j < n; ++j) gi[o + j] += v;
          } else {
            k.axpy(n, factor, g + ib, gi + o);
          }
        });
      });
}

Tensor reduce_max(const Tensor& a, const Axes& axes, bool keep_dims) {
  ReducePlan p = plan_reduce(a.shape(), axes, keep_dims);
  const std::size_t nout = shape_numel(p.keep_shape);
  std::vector<double> out(nout, -std::numeric_limits<double>::infinity());
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> arg(nout, kNone);
  const double* x = a.data().data();
  detail::for_each_row(p.rows, [&](std::size_t o, std::size_t, std::size_t ib, std::size_t n,
                                   std::size_t, std::size_t sb) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t t = ib + j * sb;
      if (arg[t] == kNone || x[o + j] > out[t]) {
        out[t] = x[o + j];
        arg[t] = o + j;
      }
    }
  });
  return Tensor::make_result(p.out_shape, std::move(out), "max", {a},
                             [arg = std::move(arg)](detail::Node& self) {
                               detail::Node& in = *self.inputs[0];
                               if (!in.requires_grad) return;
                               double* gi = in.ensure_grad().data();
                               for (std::size_t i = 0; i < arg.size(); ++i) gi[arg[i]] += self.grad[i];
                             });
}

}  // namespace

Tensor reduce(ReduceOp op, const Tensor& a, const Axes& axes, bool keep_dims) {
  switch (op) {
    case ReduceOp::Sum: return reduce_sum(a, axes, keep_dims, 1.0, "sum");
    case ReduceOp::Mean: {
      const std::size_t count = plan_reduce(a.shape(), axes, keep_dims).count;
      return reduce_sum(a, axes, keep_dims, 1.0 / static_cast<double>(count), "mean");
    }
    case ReduceOp::Max: return reduce_max(a, axes, keep_dims);
    case ReduceOp::Variance: {
      const Tensor centered = a - reduce(ReduceOp::Mean, a, axes, true);
      return reduce(ReduceOp::Mean, square(centered), axes, keep_dims);
    }
  }
  throw std::invalid_argument("reduce: unknown op");
}

Tensor sum(const Tensor& a, const Axes& axes, bool keep_dims) { return reduce(ReduceOp::Sum, a, axes, keep_dims); }
Tensor mean(const Tensor& a, const Axes& axes, bool keep_dims) { return reduce(ReduceOp::Mean, a, axes, keep_dims); }
Tensor max(const Tensor& a, const Axes& axes, bool keep_dims) { return reduce(ReduceOp::Max, a, axes, keep_dims); }
Tensor variance(const Tensor& a, const Axes& axes, bool keep_dims) {
  return reduce(ReduceOp::Variance, a, axes, keep_dims);
}

}  // namespace mixalign
