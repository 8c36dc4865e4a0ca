#include "mixalign/ema_distill.hpp"

#include <cmath>
#include <stdexcept>

namespace mixalign {

void KdConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("kd: temperature must be > 0");
  if (!(base_weight >= 0.0)) throw std::invalid_argument("kd: base weight must be >= 0");
  if (warmup_epochs < 0) throw std::invalid_argument("kd: warmup epochs must be >= 0");
}

EmaTeacher make_teacher(const ModelState& student, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("ema: momentum must lie in [0,1)");
  EmaTeacher t{student.clone(), momentum};
  for (auto& p : t.model.parameters()) p.tensor.set_requires_grad(false);
  t.model.training = false;
  return t;
}

void ema_update(EmaTeacher& teacher, const ModelState& student, double momentum) {
  auto tp = teacher.model.parameters();
  const auto sp = student.parameters();
  if (tp.size() != sp.size()) throw ShapeError("ema_update: parameter lists differ in length");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].tensor.shape() != sp[i].tensor.shape()) {
      throw ShapeError("ema_update: " + tp[i].name + " has shape " + shape_str(tp[i].tensor.shape()) +
                       " but student has " + shape_str(sp[i].tensor.shape()));
    }
  }
  const double rest = 1.0 - momentum;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    auto dst = tp[i].tensor.mutable_data();
    const auto src = sp[i].tensor.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = momentum * dst[j] + rest * src[j];
  }
}

void ema_update(EmaTeacher& teacher, const ModelState& student) { ema_update(teacher, student, teacher.momentum); }

Tensor teacher_forward(const EmaTeacher& teacher, const Tensor& images) {
  NoGradGuard guard;
  ModelState eval = teacher.model;
  eval.training = false;
  Rng unused(0);
  return forward(eval, images.detach(), unused).logits;
}

Tensor kd_loss(const Tensor& student_logits, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("kd_loss: temperature must be > 0");
  if (student_logits.shape() != teacher_logits.shape() || student_logits.dim() != 2) {
    throw ShapeError("kd_loss: logits " + shape_str(student_logits.shape()) + " and " +
                     shape_str(teacher_logits.shape()) + " must both be [B,K]");
  }
  for (double v : student_logits.data()) {
    if (!std::isfinite(v)) throw std::domain_error("kd_loss: non-finite student logits");
  }
  for (double v : teacher_logits.data()) {
    if (!std::isfinite(v)) throw std::domain_error("kd_loss: non-finite teacher logits");
  }
  const double inv_t = 1.0 / temperature;
  Tensor teacher_log_p;
  {
    NoGradGuard guard;
    teacher_log_p = log_softmax(scale(teacher_logits.detach(), inv_t), 1);
  }
  const Tensor teacher_p = exp(teacher_log_p);
  const Tensor student_log_p = log_softmax(scale(student_logits, inv_t), 1);
  const Tensor per_row = sum(teacher_p * (teacher_log_p - student_log_p), {1});
  return scale(mean(per_row), temperature * temperature);
}

}  // namespace mixalign
