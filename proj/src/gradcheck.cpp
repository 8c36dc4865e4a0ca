#include "mixalign/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <ostream>

#include "mixalign/align_loss.hpp"
#include "mixalign/cbam.hpp"
#include "mixalign/ema_distill.hpp"
#include "mixalign/mixstyle.hpp"
#include "mixalign/model.hpp"
#include "mixalign/objective.hpp"

namespace mixalign {

namespace {

constexpr double kMinStep = 1e-7;

Tensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, for ops with a kink or pole there.
Tensor signed_leaf(Shape shape, Rng& rng, double min_abs = 0.1, double max_abs = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(min_abs, max_abs);
  return Tensor(std::move(shape), std::move(v), true);
}

// Contract a tensor with a fixed pseudo-random weight to get a scalar whose
// gradient exercises every output element differently.
Tensor contract(const Tensor& t) {
  std::vector<double> w(t.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + std::sin(1.7 * static_cast<double>(i) + 0.3);
  return sum(t * Tensor(t.shape(), std::move(w)));
}

GradCase op_case(std::string name, std::function<std::vector<Tensor>(Rng&)> make,
                 std::function<Tensor(const std::vector<Tensor>&)> f) {
  return {std::move(name), std::move(make), [f](const std::vector<Tensor>& in, Rng&) { return contract(f(in)); }};
}

ModelArch small_arch() {
  ModelArch a;
  a.widths = {4, 8, 8};
  a.cbam_reduction = 4;
  a.cbam_kernel = 3;
  a.image_size = 16;
  return a;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_case(const GradCase& c, int seeds, std::uint64_t base_seed, double h) {
  if (c.step > 0.0) h = c.step;
  GradCheckResult r{c.name, seeds, 0.0, c.tolerance, true};
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(s), 0x6c);
    Rng input_rng(seed);
    std::vector<Tensor> inputs = c.make_inputs(input_rng);
    const std::uint64_t fn_seed = derive_seed(seed, 1);

    Rng rng(fn_seed);
    Tensor out = c.fn(inputs, rng);
    out.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
      analytic.emplace_back(t.numel(), 0.0);
      if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
    }

    NoGradGuard guard;
    Rng pick(derive_seed(seed, 2));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      std::vector<std::size_t> coords(inputs[i].numel());
      for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
      if (c.max_coords > 0 && coords.size() > c.max_coords) {
        const auto perm = pick.permutation(coords.size());
        coords.assign(perm.begin(), perm.begin() + static_cast<long>(c.max_coords));
      }
      auto data = inputs[i].mutable_data();
      for (std::size_t k : coords) {
        const double saved = data[k];
        auto eval_at = [&](double x) {
          data[k] = x;
          Rng replay(fn_seed);
          return c.fn(inputs, replay).item();
        };
        auto central = [&](double step) { return (eval_at(saved + step) - eval_at(saved - step)) / (2.0 * step); };
        double numeric = central(h);
        if (c.kink_retry) {
          double best_gap = std::numeric_limits<double>::infinity();
          for (double step = h; step >= kMinStep; step *= 0.1) {
            const double wide = step == h ? numeric : central(step);
            const double narrow = central(0.5 * step);
            const double gap = relative_error(wide, narrow);
            if (gap < best_gap) {
              best_gap = gap;
              numeric = wide;
            }
            if (gap < c.tolerance) break;
          }
        }
        data[k] = saved;
        r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i][k], numeric));
      }
    }
  }
  r.passed = r.max_rel_error < c.tolerance;
  return r;
}

std::vector<GradCase> standard_grad_cases() {
  std::vector<GradCase> cases;
  const Shape s3{2, 3, 4};
  auto one = [](Shape s, double lo = -1.0, double hi = 1.0) {
    return [s, lo, hi](Rng& r) { return std::vector<Tensor>{random_leaf(s, r, lo, hi)}; };
  };
  auto kinked = [](Shape s) { return [s](Rng& r) { return std::vector<Tensor>{signed_leaf(s, r)}; }; };
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& r) { return std::vector<Tensor>{random_leaf(a, r), random_leaf(b, r)}; };
  };

  cases.push_back(op_case("neg", one(s3), [](const auto& in) { return neg(in[0]); }));
  cases.push_back(op_case("exp", one(s3), [](const auto& in) { return exp(in[0]); }));
  cases.push_back(op_case("log", one(s3, 0.2, 2.0), [](const auto& in) { return log(in[0]); }));
  cases.push_back(op_case("relu", kinked(s3), [](const auto& in) { return relu(in[0]); }));
  cases.push_back(op_case("sigmoid", one(s3, -4.0, 4.0), [](const auto& in) { return sigmoid(in[0]); }));
  cases.push_back(op_case("sqrt", one(s3, 0.2, 2.0), [](const auto& in) { return sqrt(in[0]); }));
  cases.push_back(op_case("square", one(s3), [](const auto& in) { return square(in[0]); }));
  cases.push_back(op_case("softplus", one(s3, -5.0, 5.0), [](const auto& in) { return softplus(in[0]); }));
  cases.push_back(op_case("scale_add_scalar", one(s3), [](const auto& in) { return add_scalar(scale(in[0], -1.5), 0.25); }));

  cases.push_back(op_case("add", two(s3, s3), [](const auto& in) { return in[0] + in[1]; }));
  cases.push_back(op_case("sub_broadcast", two(s3, {3, 1}), [](const auto& in) { return in[0] - in[1]; }));
  cases.push_back(op_case("mul_broadcast", two({2, 1, 4}, {1, 3, 1}), [](const auto& in) { return in[0] * in[1]; }));
  cases.push_back(op_case("mul_scalar_broadcast", two(s3, {1}), [](const auto& in) { return in[0] * in[1]; }));
  cases.push_back(op_case("div", [](Rng& r) { return std::vector<Tensor>{random_leaf({2, 3, 4}, r), signed_leaf({3, 4}, r, 0.5, 2.0)}; },
                          [](const auto& in) { return in[0] / in[1]; }));

  cases.push_back(op_case("sum_all", one(s3), [](const auto& in) { return sum(in[0]); }));
  cases.push_back(op_case("sum_axis1_keep", one(s3), [](const auto& in) { return sum(in[0], {1}, true); }));
  cases.push_back(op_case("mean_axes02", one(s3), [](const auto& in) { return mean(in[0], {0, 2}); }));
  cases.push_back(op_case("max_axis2", one(s3), [](const auto& in) { return max(in[0], {2}); }));
  cases.push_back(op_case("variance_axis0", one(s3), [](const auto& in) { return variance(in[0], {0}); }));
  cases.push_back(op_case("variance_axes23", one({2, 3, 4, 5}), [](const auto& in) { return variance(in[0], {2, 3}, true); }));

  cases.push_back(op_case("matmul", two({3, 4}, {4, 5}), [](const auto& in) { return matmul(in[0], in[1]); }));
  cases.push_back(op_case("conv2d_pad1", two({2, 3, 5, 5}, {4, 3, 3, 3}), [](const auto& in) { return conv2d(in[0], in[1], {1, 1}); }));
  cases.push_back(op_case("conv2d_stride2", two({1, 2, 6, 6}, {3, 2, 2, 2}), [](const auto& in) { return conv2d(in[0], in[1], {2, 0}); }));
  cases.push_back(op_case("avg_pool2d", one({2, 3, 4, 4}), [](const auto& in) { return avg_pool2d(in[0], 2); }));
  cases.push_back(op_case("softmax_last", one(s3, -3.0, 3.0), [](const auto& in) { return softmax(in[0]); }));
  cases.push_back(op_case("softmax_axis1", one(s3, -3.0, 3.0), [](const auto& in) { return softmax(in[0], 1); }));
  cases.push_back(op_case("log_softmax", one(s3, -3.0, 3.0), [](const auto& in) { return log_softmax(in[0], 1); }));
  cases.push_back(op_case("reshape", one(s3), [](const auto& in) { return reshape(in[0], {4, 6}); }));
  cases.push_back(op_case("concat_axis1", two({2, 3, 4}, {2, 2, 4}), [](const auto& in) { return concat({in[0], in[1]}, 1); }));
  cases.push_back(op_case("index_select", one({5, 3}), [](const auto& in) {
    const std::vector<std::size_t> idx{4, 0, 4, 2};
    return index_select(in[0], idx);
  }));
  cases.push_back(op_case("slice_cols", one({4, 5}), [](const auto& in) { return slice_cols(in[0], 1, 4); }));

  // Style mixing pieces.
  cases.push_back(op_case("channel_stats", one({3, 2, 4, 4}), [](const auto& in) {
    const ChannelStats st = channel_stats(in[0]);
    return concat({st.mu, st.sigma}, 1);
  }));
  cases.push_back(op_case("mixstyle_apply", one({4, 3, 4, 4}), [](const auto& in) {
    const MixStyleDraw d{{2, 3, 0, 1}, {0.2, 0.7, 0.5, 0.9}};
    return mixstyle_apply(in[0], d, 1e-6);
  }));
  cases.push_back({"mixstyle_forward", one({4, 3, 4, 4}), [](const std::vector<Tensor>& in, Rng& rng) {
                     MixStyleConfig cfg;
                     cfg.apply_probability = 1.0;
                     return contract(mixstyle_forward(in[0], cfg, rng));
                   }});

  // Attention: input features plus every attention parameter.
  auto cbam_inputs = [](Rng& r) {
    CbamParams p = init_cbam(8, 4, 3, r);
    std::vector<Tensor> in{random_leaf({2, 8, 5, 5}, r)};
    for (Tensor t : {p.mlp_w1, p.mlp_b1, p.mlp_w2, p.mlp_b2, p.spatial_kernel, p.spatial_bias}) {
      in.push_back(random_leaf(t.shape(), r, -0.5, 0.5));
    }
    return in;
  };
  auto cbam_params = [](const std::vector<Tensor>& in) {
    CbamParams p;
    p.mlp_w1 = in[1];
    p.mlp_b1 = in[2];
    p.mlp_w2 = in[3];
    p.mlp_b2 = in[4];
    p.spatial_kernel = in[5];
    p.spatial_bias = in[6];
    p.reduction_ratio = 4;
    p.kernel_size = 3;
    return p;
  };
  // Channel max pooling has ties to straddle.
  for (auto c : {op_case("channel_attention", cbam_inputs, [cbam_params](const auto& in) { return channel_attention(in[0], cbam_params(in)); }),
                 op_case("spatial_attention", cbam_inputs, [cbam_params](const auto& in) { return spatial_attention(in[0], cbam_params(in)); }),
                 op_case("cbam_forward", cbam_inputs, [cbam_params](const auto& in) { return cbam_forward(in[0], cbam_params(in)); })}) {
    c.kink_retry = true;
    cases.push_back(std::move(c));
  }

  // Losses.
  cases.push_back({"bce_with_logits", one({8}, -4.0, 4.0), [](const std::vector<Tensor>& in, Rng&) {
                     return bce_with_logits(in[0], Tensor({8}, {1, 0, 0, 1, 1, 0, 1, 0}));
                   }});
  cases.push_back({"alignment_loss", one({6, 5}), [](const std::vector<Tensor>& in, Rng&) {
                     const std::vector<int> ids{0, 1, 2, 0, 1, 0};
                     const std::vector<int> known{0, 1, 2, 3};
                     return alignment_loss(in[0], drop_absent_domains(ids, known));
                   }});
  cases.push_back({"alignment_loss_from_features", one({4, 3, 3, 3}), [](const std::vector<Tensor>& in, Rng&) {
                     const std::vector<int> ids{0, 1, 1, 0};
                     return alignment_loss(channel_descriptor(in[0]), drop_absent_domains(ids, {}));
                   }});
  // Teacher logits enter as a constant: the loss never sends them gradient.
  cases.push_back({"kd_loss", [](Rng& r) {
                     Tensor teacher = random_leaf({4, 3}, r, -2, 2);
                     teacher.set_requires_grad(false);
                     return std::vector<Tensor>{random_leaf({4, 3}, r, -2, 2), teacher};
                   },
                   [](const std::vector<Tensor>& in, Rng&) { return kd_loss(in[0], in[1], 2.0); }});
  cases.push_back({"total_loss", [](Rng& r) { return std::vector<Tensor>{random_leaf({6, 2}, r, -2, 2), random_leaf({6, 4}, r)}; },
                   [](const std::vector<Tensor>& in, Rng&) {
                     const Tensor labels({6}, {1, 0, 0, 1, 0, 1});
                     const std::vector<int> ids{0, 1, 2, 0, 1, 2};
                     const Tensor teacher({6, 2}, {0.5, -0.5, 1.0, 0.2, -0.3, 0.3, 0.0, 0.1, 2.0, -1.0, -0.7, 0.4});
                     ObjectiveTerms t;
                     t.cls = bce_with_logits(binary_logit(in[0]), labels);
                     t.align = alignment_loss(in[1], drop_absent_domains(ids, {}));
                     t.kd = kd_loss(in[0], teacher, 2.0);
                     return total_loss(t, 0.7, 0.3);
                   }});

  // The full training objective through a width-reduced model, differentiated
  // with respect to every parameter, with style mixing active.
  GradCase model_case;
  model_case.name = "model_end_to_end";
  model_case.tolerance = 1e-3;
  model_case.max_coords = 24;
  // Many ReLU units sit close to the probes.
  model_case.step = 1e-6;
  model_case.kink_retry = true;
  model_case.make_inputs = [](Rng& r) {
    MixStyleConfig ms;
    ms.apply_probability = 1.0;
    ModelState m = init_model(small_arch(), ms, r);
    std::vector<Tensor> in;
    for (const auto& p : m.parameters()) in.push_back(p.tensor);
    in.push_back(random_leaf({2, 3, 16, 16}, r, 0.0, 1.0));  // images, checked too
    return in;
  };
  model_case.fn = [](const std::vector<Tensor>& in, Rng& rng) {
    MixStyleConfig ms;
    ms.apply_probability = 1.0;
    Rng arch_rng(0);
    ModelState m = init_model(small_arch(), ms, arch_rng);
    std::size_t k = 0;
    for (auto& s : m.stages) {
      s.kernel = in[k++];
      s.bias = in[k++];
    }
    m.cbam.mlp_w1 = in[k++];
    m.cbam.mlp_b1 = in[k++];
    m.cbam.mlp_w2 = in[k++];
    m.cbam.mlp_b2 = in[k++];
    m.cbam.spatial_kernel = in[k++];
    m.cbam.spatial_bias = in[k++];
    m.head_weight = in[k++];
    m.head_bias = in[k++];
    const Tensor& images = in[k];
    m.training = true;
    const ForwardOutput out = forward(m, images, rng);
    const Tensor labels({2}, {1, 0});
    const std::vector<int> ids{0, 1};
    const Tensor teacher({2, 2}, {0.3, -0.2, 0.8, 0.1});
    ObjectiveTerms t;
    t.cls = bce_with_logits(binary_logit(out.logits), labels);
    t.align = alignment_loss(channel_descriptor(out.features), drop_absent_domains(ids, {}));
    t.kd = kd_loss(out.logits, teacher, 2.0);
    return total_loss(t, 0.8, 0.5);
  };
  cases.push_back(model_case);
  return cases;
}

std::vector<GradCheckResult> run_gradcheck_suite(int seeds, std::ostream* progress) {
  std::vector<GradCheckResult> out;
  for (const auto& c : standard_grad_cases()) {
    out.push_back(check_case(c, seeds));
    if (progress != nullptr) {
      const auto& r = out.back();
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-30s seeds %d max_rel_err %.3e tol %.0e %s\n", r.name.c_str(), r.seeds,
                    r.max_rel_error, r.tolerance, r.passed ? "PASS" : "FAIL");
      *progress << buf << std::flush;
    }
  }
  return out;
}

}  // namespace mixalign
