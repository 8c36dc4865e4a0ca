#pragma once

// Desk-scale classifier: three conv stages (conv3x3 + ReLU + 2x2 average
// downsample) with style mixing after stages 1 and 2, attention refinement of
// the last stage, global average pooling and a two-logit head.

#include <cstddef>
#include <string>
#include <vector>

#include "mixalign/cbam.hpp"
#include "mixalign/mixstyle.hpp"
#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct ModelArch {
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t in_channels = 3;
  std::size_t image_size = 32;
  std::size_t num_classes = 2;
  std::size_t cbam_reduction = 8;
  std::size_t cbam_kernel = 7;
};

struct ConvStage {
  Tensor kernel;  // [out, in, 3, 3]
  Tensor bias;    // [1, out, 1, 1]
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct ModelState {
  ModelArch arch;
  std::vector<ConvStage> stages;
  // One per stage that is followed by style mixing (stages 1 and 2).
  std::vector<MixStyleConfig> mixstyle;
  bool mixstyle_enabled = true;
  CbamParams cbam;
  Tensor head_weight;  // [C_last, num_classes]
  Tensor head_bias;    // [num_classes]
  bool training = true;

  // Fixed order; this order is the checkpoint and EMA pairing order.
  std::vector<NamedParam> parameters() const;
  std::size_t parameter_count() const;
  // Deep copy of every parameter value; the copy shares nothing.
  ModelState clone() const;
  void zero_grad();
};

ModelState init_model(const ModelArch& arch, const MixStyleConfig& mixstyle, Rng& rng);

struct ForwardOutput {
  Tensor logits;    // [B, num_classes]
  Tensor features;  // attention-refined last-stage map [B, C_last, h, w]
};

// Train mode consumes rng for style mixing; eval mode is deterministic.
ForwardOutput forward(const ModelState& state, const Tensor& images, Rng& rng);

// logit of the positive class against the negative one: z1 - z0, shape [B].
Tensor binary_logit(const Tensor& logits);
// softmax probability of class 1 per row.
std::vector<double> positive_probability(const Tensor& logits);

}  // namespace mixalign
