#include "mixalign/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mixalign/align_loss.hpp"

namespace mixalign {

namespace {

// gain 1 gives U(-1/sqrt(fan_in), 1/sqrt(fan_in)); sqrt(6) keeps ReLU stages at unit variance.
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor copy_param(const Tensor& t) { return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), t.requires_grad()); }

}  // namespace

std::vector<NamedParam> ModelState::parameters() const {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    out.push_back({"stage" + std::to_string(i) + ".kernel", stages[i].kernel});
    out.push_back({"stage" + std::to_string(i) + ".bias", stages[i].bias});
  }
  out.push_back({"cbam.mlp_w1", cbam.mlp_w1});
  out.push_back({"cbam.mlp_b1", cbam.mlp_b1});
  out.push_back({"cbam.mlp_w2", cbam.mlp_w2});
  out.push_back({"cbam.mlp_b2", cbam.mlp_b2});
  out.push_back({"cbam.spatial_kernel", cbam.spatial_kernel});
  out.push_back({"cbam.spatial_bias", cbam.spatial_bias});
  out.push_back({"head.weight", head_weight});
  out.push_back({"head.bias", head_bias});
  return out;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

ModelState ModelState::clone() const {
  ModelState copy = *this;
  for (auto& s : copy.stages) {
    s.kernel = copy_param(s.kernel);
    s.bias = copy_param(s.bias);
  }
  copy.cbam.mlp_w1 = copy_param(cbam.mlp_w1);
  copy.cbam.mlp_b1 = copy_param(cbam.mlp_b1);
  copy.cbam.mlp_w2 = copy_param(cbam.mlp_w2);
  copy.cbam.mlp_b2 = copy_param(cbam.mlp_b2);
  copy.cbam.spatial_kernel = copy_param(cbam.spatial_kernel);
  copy.cbam.spatial_bias = copy_param(cbam.spatial_bias);
  copy.head_weight = copy_param(head_weight);
  copy.head_bias = copy_param(head_bias);
  return copy;
}

void ModelState::zero_grad() {
  for (auto& p : parameters()) p.tensor.clear_grad();
}

ModelState init_model(const ModelArch& arch, const MixStyleConfig& mixstyle, Rng& rng) {
  if (arch.widths.size() != 3) throw std::invalid_argument("model: exactly three stage widths expected");
  mixstyle.validate();
  ModelState m;
  m.arch = arch;
  std::size_t in = arch.in_channels;
  for (std::size_t w : arch.widths) {
    m.stages.push_back({fan_in_uniform({w, in, 3, 3}, in * 9, rng, std::sqrt(6.0)), Tensor::zeros({1, w, 1, 1}, true)});
    in = w;
  }
  m.mixstyle = {mixstyle, mixstyle};
  m.cbam = init_cbam(in, arch.cbam_reduction, arch.cbam_kernel, rng);
  m.head_weight = fan_in_uniform({in, arch.num_classes}, in, rng);
  m.head_bias = Tensor::zeros({arch.num_classes}, true);
  return m;
}

ForwardOutput forward(const ModelState& state, const Tensor& images, Rng& rng) {
  const Shape& s = images.shape();
  const std::size_t size = state.arch.image_size;
  if (s.size() != 4 || s[1] != state.arch.in_channels || s[2] != size || s[3] != size) {
    throw ShapeError("forward: expected [B," + std::to_string(state.arch.in_channels) + "," + std::to_string(size) +
                     "," + std::to_string(size) + "], got " + shape_str(s));
  }
  // Pixels in [0,1] are mapped to [-1,1] before the first convolution.
  Tensor x = images * 2.0 + (-1.0);
  for (std::size_t i = 0; i < state.stages.size(); ++i) {
    x = conv2d(x, state.stages[i].kernel, {1, 1}) + state.stages[i].bias;
    x = avg_pool2d(relu(x), 2);
    if (i < state.mixstyle.size()) {
      MixStyleConfig cfg = state.mixstyle[i];
      cfg.active = state.training && state.mixstyle_enabled && cfg.active;
      x = mixstyle_forward(x, cfg, rng);
    }
  }
  Tensor refined = cbam_forward(x, state.cbam);
  Tensor logits = matmul(channel_descriptor(refined), state.head_weight) + state.head_bias;
  return {logits, refined};
}

Tensor binary_logit(const Tensor& logits) {
  if (logits.dim() != 2 || logits.shape()[1] != 2) {
    throw ShapeError("binary_logit: expected [B,2], got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.shape()[0];
  return reshape(slice_cols(logits, 1, 2) - slice_cols(logits, 0, 1), {b});
}

std::vector<double> positive_probability(const Tensor& logits) {
  NoGradGuard guard;
  const Tensor p = softmax(logits, 1);
  std::vector<double> out;
  const std::size_t k = logits.shape()[1];
  for (std::size_t i = 0; i < logits.shape()[0]; ++i) out.push_back(p.data()[i * k + 1]);
  return out;
}

}  // namespace mixalign
