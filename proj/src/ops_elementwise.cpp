#include <algorithm>
#include <cmath>

#include "mixalign/kernels.hpp"
#include "mixalign/tensor.hpp"
#include "ops_internal.hpp"

namespace mixalign {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

namespace detail {

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shape(a, b);
  const std::size_t nd = plan.out.size();
  std::vector<std::size_t> sa(nd, 0), sb(nd, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = nd; i-- > 0;) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    sa[i] = (da == 1 && plan.out[i] != 1) ? 0 : ra;
    sb[i] = (db == 1 && plan.out[i] != 1) ? 0 : rb;
    ra *= da;
    rb *= db;
  }
  // Merge adjacent dims whose strides compose, so inner rows are as long as possible.
  for (std::size_t i = 0; i < nd; ++i) {
    if (plan.out[i] == 1) continue;
    if (!plan.dims.empty()) {
      const std::size_t last = plan.dims.size() - 1;
      const std::size_t ext = plan.out[i];
      const bool merge_a = plan.stride_a[last] == sa[i] * ext;
      const bool merge_b = plan.stride_b[last] == sb[i] * ext;
      if (merge_a && merge_b) {
        plan.dims[last] *= ext;
        plan.stride_a[last] = sa[i];
        plan.stride_b[last] = sb[i];
        continue;
      }
    }
    plan.dims.push_back(plan.out[i]);
    plan.stride_a.push_back(sa[i]);
    plan.stride_b.push_back(sb[i]);
  }
  if (plan.dims.empty()) {
    plan.dims.push_back(1);
    plan.stride_a.push_back(0);
    plan.stride_b.push_back(0);
  }
  return plan;
}

}  // namespace detail

namespace {

using detail::BroadcastPlan;

double apply_binary(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::Add: return x + y;
    case BinaryOp::Sub: return x - y;
    case BinaryOp::Mul: return x * y;
    case BinaryOp::Div: return x / y;
  }
  return 0.0;
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "add";
    case BinaryOp::Sub: return "sub";
    case BinaryOp::Mul: return "mul";
    case BinaryOp::Div: return "div";
  }
  return "binary";
}

void binary_forward(BinaryOp op, const BroadcastPlan& plan, const double* a, const double* b,
                    double* out) {
  const auto& k = kernels::active();
  detail::for_each_row(plan, [&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n,
                                 std::size_t sa, std::size_t sb) {
    if (sa == 1 && sb == 1) {
      switch (op) {
        case BinaryOp::Add: k.add(n, a + ia, b + ib, out + o); return;
        case BinaryOp::Sub: k.sub(n, a + ia, b + ib, out + o); return;
        case BinaryOp::Mul: k.mul(n, a + ia, b + ib, out + o); return;
        case BinaryOp::Div: k.div(n, a + ia, b + ib, out + o); return;
      }
    }
    if (sa == 1 && sb == 0 && op == BinaryOp::Mul) {
      k.scale(n, a + ia, b[ib], out + o);
      return;
    }
    for (std::size_t j = 0; j < n; ++j) out[o + j] = apply_binary(op, a[ia + j * sa], b[ib + j * sb]);
  });
}

}  // namespace

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  BroadcastPlan plan = detail::make_broadcast_plan(a.shape(), b.shape());
  std::vector<double> out(shape_numel(plan.out));
  binary_forward(op, plan, a.data().data(), b.data().data(), out.data());
  Shape out_shape = plan.out;
  return Tensor::make_result(
      std::move(out_shape), std::move(out), binary_name(op), {a, b},
      [op, plan = std::move(plan)](detail::Node& self) {
        detail::Node& na = *self.inputs[0];
        detail::Node& nb = *self.inputs[1];
        const double* g = self.grad.data();
        const double* av = na.value.data();
        const double* bv = nb.value.data();
        const auto& k = kernels::active();
        if (na.requires_grad) {
          double* ga = na.ensure_grad().data();
          detail::for_each_row(plan, [&](std::size_t o, std::size_t ia, std::size_t ib,
                                         std::size_t n, std::size_t sa, std::size_t sb) {
            if (sa == 1 && (op == BinaryOp::Add || op == BinaryOp::Sub)) {
              k.axpy(n, 1.0, g + o, ga + ia);
              return;
            }
            if (op == BinaryOp::Mul && sa == 1 && sb == 0) {
              k.axpy(n, bv[ib], g + o, ga + ia);
              return;
            }
            if (op == BinaryOp::Mul && sa == 0 && sb == 1) {
              ga[ia] += k.dot(n, g + o, bv + ib);
              return;
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double gj = g[o + j];
              double d = 0.0;
              switch (op) {
                case BinaryOp::Add:
                case BinaryOp::Sub: d = gj; break;
                case BinaryOp::Mul: d = gj * bv[ib + j * sb]; break;
                case BinaryOp::Div: d = gj / bv[ib + j * sb]; break;
              }
              ga[ia + j * sa] += d;
            }
          });
        }
        if (nb.requires_grad) {
          double* gb = nb.ensure_grad().data();
          detail::for_each_row(plan, [&](std::size_t o, std::size_t ia, std::size_t ib,
                                         std::size_t n, std::size_t sa, std::size_t sb) {
            if (sb == 1 && (op == BinaryOp::Add || op == BinaryOp::Sub)) {
              k.axpy(n, op == BinaryOp::Add ? 1.0 : -1.0, g + o, gb + ib);
              return;
            }
            if (op == BinaryOp::Mul && sb == 1 && sa == 0) {
              k.axpy(n, av[ia], g + o, gb + ib);
              return;
            }
            if (op == BinaryOp::Mul && sb == 0 && sa == 1) {
              gb[ib] += k.dot(n, g + o, av + ia);
              return;
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double gj = g[o + j];
              double d = 0.0;
              switch (op) {
                case BinaryOp::Add: d = gj; break;
                case BinaryOp::Sub: d = -gj; break;
                case BinaryOp::Mul: d = gj * av[ia + j * sa]; break;
                case BinaryOp::Div: {
                  const double y = bv[ib + j * sb];
                  d = -gj * av[ia + j * sa] / (y * y);
                  break;
                }
              }
              gb[ib + j * sb] += d;
            }
          });
        }
      });
}

namespace {

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "neg";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Relu: return "relu";
    case UnaryOp::Sigmoid: return "sigmoid";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Square: return "square";
    case UnaryOp::Softplus: return "softplus";
  }
  return "unary";
}

}  // namespace

Tensor unary(UnaryOp op, const Tensor& a) {
  const auto x = a.data();
  const std::size_t n = x.size();
  std::vector<double> y(n);
  const auto& k = kernels::active();
  switch (op) {
    case UnaryOp::Neg: k.scale(n, x.data(), -1.0, y.data()); break;
    case UnaryOp::Exp: std::transform(x.begin(), x.end(), y.begin(), [](double v) { return std::exp(v); }); break;
    case UnaryOp::Log: std::transform(x.begin(), x.end(), y.begin(), [](double v) { return std::log(v); }); break;
    case UnaryOp::Relu: k.relu(n, x.data(), y.data()); break;
    case UnaryOp::Sigmoid: std::transform(x.begin(), x.end(), y.begin(), sigmoid_value); break;
    case UnaryOp::Sqrt: std::transform(x.begin(), x.end(), y.begin(), [](double v) { return std::sqrt(v); }); break;
    case UnaryOp::Square: k.mul(n, x.data(), x.data(), y.data()); break;
    case UnaryOp::Softplus: std::transform(x.begin(), x.end(), y.begin(), softplus_value); break;
  }
  return Tensor::make_result(a.shape(), std::move(y), unary_name(op), {a}, [op](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double* gi = in.ensure_grad().data();
    const double* g = self.grad.data();
    const double* xv = in.value.data();
    const double* yv = self.value.data();
    const std::size_t n = self.value.size();
    const auto& k = kernels::active();
    switch (op) {
      case UnaryOp::Neg: k.axpy(n, -1.0, g, gi); break;
      case UnaryOp::Exp:
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] * yv[i];
        break;
      case UnaryOp::Log:
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] / xv[i];
        break;
      case UnaryOp::Relu: k.relu_backward(n, xv, g, gi); break;
      case UnaryOp::Sigmoid:
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] * yv[i] * (1.0 - yv[i]);
        break;
      case UnaryOp::Sqrt:
        for (std::size_t i = 0; i < n; ++i) {
          if (yv[i] > 0.0) gi[i] += g[i] / (2.0 * yv[i]);
        }
        break;
      case UnaryOp::Square:
        for (std::size_t i = 0; i < n; ++i) gi[i] += 2.0 * xv[i] * g[i];
        break;
      case UnaryOp::Softplus:
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[i] * sigmoid_value(xv[i]);
        break;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Div, a, b); }
Tensor neg(const Tensor& a) { return unary(UnaryOp::Neg, a); }
Tensor exp(const Tensor& a) { return unary(UnaryOp::Exp, a); }
Tensor log(const Tensor& a) { return unary(UnaryOp::Log, a); }
Tensor relu(const Tensor& a) { return unary(UnaryOp::Relu, a); }
Tensor sigmoid(const Tensor& a) { return unary(UnaryOp::Sigmoid, a); }
Tensor sqrt(const Tensor& a) { return unary(UnaryOp::Sqrt, a); }
Tensor square(const Tensor& a) { return unary(UnaryOp::Square, a); }
Tensor softplus(const Tensor& a) { return unary(UnaryOp::Softplus, a); }

Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a.numel());
  kernels::active().scale(y.size(), a.data().data(), s, y.data());
  return Tensor::make_result(a.shape(), std::move(y), "scale", {a}, [s](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    kernels::active().axpy(self.grad.size(), s, self.grad.data(), in.ensure_grad().data());
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto x = a.data();
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [s](double v) { return v + s; });
  return Tensor::make_result(a.shape(), std::move(y), "add_scalar", {a}, [](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    kernels::active().axpy(self.grad.size(), 1.0, self.grad.data(), in.ensure_grad().data());
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

}  // namespace mixalign
