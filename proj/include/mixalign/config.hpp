#pragma once

// Experiment configuration and its text form.
//
// Grammar (one item per line, '#' starts a comment):
//   [section]
//   key = value
// Every key belongs to exactly one section; unknown sections or keys, repeated
// keys and malformed values are rejected. Doubles are written with 17
// significant digits so a parse of the written text restores the exact value.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "mixalign/augment.hpp"
#include "mixalign/ema_distill.hpp"
#include "mixalign/mixstyle.hpp"
#include "mixalign/model.hpp"
#include "mixalign/optim.hpp"
#include "mixalign/synth.hpp"

namespace mixalign {

struct TrainConfig {
  // [run]
  std::uint64_t seed = 0;
  int epochs = 60;
  std::size_t batch_size = 32;
  int early_stop_patience = 10;
  double threshold = 0.5;
  double clip_norm = 1.0;
  std::string out_dir = "runs/default";

  // [data]
  GeneratorConfig data{};
  bool augment_enabled = true;

  // [model]
  ModelArch arch{};

  // [optim], [sched]
  AdamWConfig optim{};
  PlateauScheduler sched{};

  // [mixstyle]
  bool mixstyle_enabled = true;
  MixStyleConfig mixstyle{};

  // [kd], [ema]
  bool kd_enabled = true;
  KdConfig kd{};
  bool kd_every_batch = true;
  int kd_interval = 1;  // used when kd_every_batch is false
  double ema_momentum = 0.999;
  // Use min(m, (1 + t) / (10 + t)) at update t so short runs are not
  // dominated by the initial weights.
  bool ema_ramp = true;

  // [align]
  bool align_enabled = true;
  double align_scale = 1.0;
  double dann_gamma = 10.0;

  // [augment]
  AugmentConfig augment{};

  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_text(const TrainConfig& config);
// Keys absent from the text keep their defaults.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

// FNV-1a of the resolved text with the output directory blanked, so moving a
// run does not change its identity.
std::uint64_t config_hash(const TrainConfig& config);

// Ablation cells: which optional components are switched on.
enum class Component { None, MixStyle, Align, Kd, All };
const char* component_name(Component c);
Component parse_component(const std::string& name);
TrainConfig with_components(TrainConfig base, Component c);

}  // namespace mixalign
