#pragma once

// Mean-teacher maintenance and temperature-scaled distillation.

#include "mixalign/model.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct KdConfig {
  double temperature = 2.0;
  double base_weight = 0.5;
  int warmup_epochs = 10;

  void validate() const;
};

struct EmaTeacher {
  ModelState model;  // parameters never require grad
  double momentum = 0.999;
};

// Teacher starts as an exact copy of the student, in eval mode.
EmaTeacher make_teacher(const ModelState& student, double momentum);

// teacher <- m * teacher + (1 - m) * student, in place.
void ema_update(EmaTeacher& teacher, const ModelState& student, double momentum);
void ema_update(EmaTeacher& teacher, const ModelState& student);

// Eval-mode, gradient-free logits.
Tensor teacher_forward(const EmaTeacher& teacher, const Tensor& images);

// T^2 * mean_b KL(softmax(z_T/T) || softmax(z_S/T)). z_T is detached here.
Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature);

}  // namespace mixalign
