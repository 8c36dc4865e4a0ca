#pragma once

// Central finite-difference checks of reverse-mode gradients.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixalign/random.hpp"
#include "mixalign/tensor.hpp"

namespace mixalign {

struct GradCase {
  std::string name;
  // Fresh leaf inputs (requires_grad set) for one seed.
  std::function<std::vector<Tensor>(Rng&)> make_inputs;
  // Scalar function of the inputs. rng is re-seeded identically for every
  // evaluation so stochastic layers replay the same draw.
  std::function<Tensor(const std::vector<Tensor>&, Rng&)> fn;
  double tolerance = 1e-4;
  // Check at most this many coordinates per input (0 = all).
  std::size_t max_coords = 0;
  // Finite-difference step; 0 means the suite default.
  double step = 0.0;
  // For piecewise-linear functions: when differences at step and step/2
  // disagree, a kink lies between the probes and the step shrinks tenfold.
  bool kink_retry = false;
};

struct GradCheckResult {
  std::string name;
  int seeds = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor), maximised over checked coordinates.
double relative_error(double analytic, double numeric, double floor = 1e-6);

GradCheckResult check_case(const GradCase& c, int seeds, std::uint64_t base_seed = 1, double h = 1e-5);

// Every differentiable op, each loss, and the full objective through a
// width-reduced model.
std::vector<GradCase> standard_grad_cases();

std::vector<GradCheckResult> run_gradcheck_suite(int seeds = 20, std::ostream* progress = nullptr);

}  // namespace mixalign
