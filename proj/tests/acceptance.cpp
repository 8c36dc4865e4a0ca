// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <sstream>

#include "mixalign/align_loss.hpp"
#include "mixalign/checkpoint.hpp"
#include "mixalign/config.hpp"
#include "mixalign/ema_distill.hpp"
#include "mixalign/gradcheck.hpp"
#include "mixalign/metrics.hpp"
#include "mixalign/mixstyle.hpp"
#include "mixalign/objective.hpp"
#include "mixalign/optim.hpp"
#include "mixalign/trainer.hpp"

using namespace mixalign;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Half-up rounding to four decimals. The value is first snapped to 1e-8 so a
// binary representation just below a decimal tie still rounds up.
double round4(double x) {
  const long long v = std::llround(x * 1e8);
  return static_cast<double>((v + 5000) / 10000) / 1e4;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

void report(int id, const char* title, const Check& c, const std::string& detail) {
  std::cout << (c.failures.empty() ? "PASS" : "FAIL") << " criterion " << id << " (" << title << ")";
  if (!detail.empty()) std::cout << ": " << detail;
  for (const auto& f : c.failures) std::cout << " [" << f << "]";
  std::cout << std::endl;
}

Check arithmetic(std::string& detail) {
  Check c;
  const double ours = balanced_accuracy(0.8873, 0.8651), base = balanced_accuracy(0.9014, 0.6851);
  c.expect(round4(ours) == 0.8762, "0.8762");
  c.expect(round4(base) == 0.7933, "0.7933");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.4f and %.4f", round4(ours), round4(base));
  detail = buf;
  return c;
}

Check gradients(std::string& detail) {
  Check c;
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(20);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (const auto& r : results) {
    c.expect(r.passed && r.seeds >= 20, r.name);
    worst = std::max(worst, r.max_rel_error / r.tolerance);
  }
  c.expect(secs < 300.0, "runtime");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu cases x 20 seeds, worst error/tolerance %.3f, %.1fs", results.size(), worst, secs);
  detail = buf;
  return c;
}

Check oracles(std::string& detail) {
  Check c;
  const std::vector<int> ids{0, 1};
  const double align = alignment_loss(Tensor({2, 1}, {1, 3}), drop_absent_domains(ids, {})).item();
  c.expect(std::abs(align - std::log(2.0)) < 1e-12, "alignment log 2");

  const double kd = kd_loss(Tensor({1, 2}, {0, 0}), Tensor({1, 2}, {2, 0}), 2.0).item();
  c.expect(std::abs(kd - 0.4437) <= 1e-3, "kd 0.4437");

  const Tensor mixed = mixstyle_apply(Tensor({2, 1, 1, 2}, {1, 3, 4, 8}), MixStyleDraw{{1, 0}, {0.5, 0.5}}, 1e-6);
  c.expect(std::abs(mixed.data()[0] - 2.5) <= 1e-6 && std::abs(mixed.data()[1] - 5.5) <= 1e-6, "mixstyle [2.5,5.5]");

  const double auc = roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1});
  c.expect(auc == 0.75, "auc 0.75");

  Rng rng(31337);
  int mismatches = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.index(10)) / 10.0;
      y[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (y[i] == 1 && y[j] == 0) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
      }
    }
    mismatches += roc_auc(s, y) != wins / pairs;
  }
  c.expect(mismatches == 0, "rank auc vs pair counting");
  char buf[200];
  std::snprintf(buf, sizeof(buf), "align %.6f, kd %.4f, mixstyle [%.9f, %.9f], auc %.2f, %d/200 auc mismatches", align, kd,
                mixed.data()[0], mixed.data()[1], auc, mismatches);
  detail = buf;
  return c;
}

TrainConfig small_run(const fs::path& out) {
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.out_dir = out.string();
  cfg.data.train_domains = 2;
  cfg.data.heldout_domains = 1;
  cfg.data.samples_per_domain = 32;
  cfg.arch.widths = {4, 8, 8};
  cfg.arch.cbam_reduction = 4;
  cfg.arch.cbam_kernel = 3;
  cfg.kd.warmup_epochs = 1;
  return cfg;
}

Check invariants(const fs::path& work, std::string& detail) {
  Check c;
  Rng rng(5);
  auto random = [&](Shape s, double lo, double hi, bool grad) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(s), std::move(v), grad);
  };

  // Teacher untouched by a backward pass through student and distillation loss.
  ModelArch arch;
  arch.widths = {4, 8, 8};
  arch.cbam_reduction = 4;
  arch.cbam_kernel = 3;
  ModelState student = init_model(arch, MixStyleConfig{}, rng);
  EmaTeacher teacher = make_teacher(student, 0.999);
  std::vector<std::vector<double>> before;
  for (const auto& p : teacher.model.parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  const Tensor images = random({4, 3, 32, 32}, 0, 1, false);
  Rng fwd(1);
  const Tensor zs = forward(student, images, fwd).logits;
  (kd_loss(zs, teacher_forward(teacher, images), 2.0) + bce_with_logits(binary_logit(zs), Tensor({4}, {1, 0, 0, 1}))).backward();
  const auto tp = teacher.model.parameters();
  bool untouched = true;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    untouched = untouched && !tp[i].tensor.has_grad() &&
                std::equal(before[i].begin(), before[i].end(), tp[i].tensor.data().begin());
  }
  c.expect(untouched, "teacher unchanged");

  Tensor x = random({3}, -1, 1, true), y = random({3}, -1, 1, true);
  sum(x * y.detach()).backward();
  c.expect(x.has_grad() && !y.has_grad(), "detach");

  // Zero exactly when the per-domain means coincide.
  const Tensor same({4, 2}, {1.0, 2.0, 3.0, -1.0, 1.5, 1.0, 2.5, 0.0});
  const Tensor apart({4, 2}, {1.0, 2.0, 3.0, -1.0, 1.5, 1.0, 2.5, 0.5});
  const std::vector<int> d{0, 0, 1, 1};
  c.expect(alignment_loss(same, drop_absent_domains(d, {})).item() == 0.0, "align zero on equal means");
  c.expect(alignment_loss(apart, drop_absent_domains(d, {})).item() > 0.0, "align positive on distinct means");

  MixStyleConfig ms;
  ms.active = false;
  ms.apply_probability = 1.0;
  const Tensor feat = random({4, 3, 4, 4}, -1, 1, false);
  const Tensor same_feat = mixstyle_forward(feat, ms, rng);
  c.expect(std::equal(feat.data().begin(), feat.data().end(), same_feat.data().begin()), "mixstyle eval identity");

  c.expect(dann_lambda(0.0) == 0.0, "dann(0)");
  c.expect(std::abs(dann_lambda(1.0) - 0.99995) <= 1e-5, "dann(1)");

  double worst_norm = 0.0;
  for (int t = 0; t < 100; ++t) {
    Tensor g = Tensor::zeros({17}, true);
    auto grad = g.mutable_grad();
    const double mag = std::pow(10.0, rng.uniform(-2, 4));
    for (double& v : grad) v = mag * rng.uniform(-1, 1);
    const std::vector<NamedParam> ps{{"g", g}};
    clip_grad_norm(ps, 1.0);
    double sq = 0.0;
    for (double v : g.grad()) sq += v * v;
    worst_norm = std::max(worst_norm, std::sqrt(sq));
  }
  c.expect(worst_norm <= 1.0 + 1e-12, "post-clip norm");

  const fs::path full = work / "resume_full", part = work / "resume_part";
  fs::remove_all(full);
  fs::remove_all(part);
  run_train(small_run(full));
  TrainOptions stop;
  stop.stop_after_epochs = 1;
  run_train(small_run(part), stop);
  TrainOptions resume;
  resume.resume_from = (part / "last.ckpt").string();
  run_train(small_run(part), resume);
  const bool same_log = slurp(full / "runlog.csv") == slurp(part / "runlog.csv");
  const bool same_params = Checkpoint::load((full / "last.ckpt").string()).arrays ==
                           Checkpoint::load((part / "last.ckpt").string()).arrays;
  c.expect(same_log && same_params, "resume bit-exact");

  char buf[96];
  std::snprintf(buf, sizeof(buf), "dann(1) = %.6f, worst post-clip norm %.15f", dann_lambda(1.0), worst_norm);
  detail = buf;
  return c;
}

Check ablation(const std::string& config_path, const fs::path& work, std::string& detail) {
  Check c;
  TrainConfig base = load_config(config_path);
  base.out_dir = (work / "ablation").string();
  fs::remove_all(base.out_dir);
  const std::vector<Component> cells{Component::None, Component::MixStyle, Component::Align, Component::Kd, Component::All};
  const auto t0 = Clock::now();
  const AblationResult r = run_ablation(base, 5, cells, &std::cout);
  const double secs = seconds_since(t0);
  std::map<Component, double> mean;
  for (const auto& s : r.summary) mean[s.component] = s.mean_ba;
  const double none = mean[Component::None];
  c.expect(mean[Component::All] >= none + 0.03, "all >= none + 0.03");
  for (Component k : {Component::MixStyle, Component::Align, Component::Kd}) {
    c.expect(mean[k] >= none - 0.01, std::string(component_name(k)) + " >= none - 0.01");
  }
  c.expect(secs <= 7200.0, "runtime");
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  for (const auto& s : r.summary) os << component_name(s.component) << " " << s.mean_ba << " (sd " << s.std_ba << "), ";
  os.precision(0);
  os << secs << "s";
  detail = os.str();
  return c;
}

Check determinism(const std::string& cli, const fs::path& work, std::string& detail) {
  Check c;
  const fs::path cfg_path = work / "determinism.cfg";
  {
    TrainConfig cfg = small_run(work / "unused");
    cfg.epochs = 2;
    std::ofstream(cfg_path) << to_text(cfg);
  }
  int codes[2] = {0, 0};
  for (int i = 0; i < 2; ++i) {
    const fs::path out = work / ("determinism_" + std::to_string(i));
    fs::remove_all(out);
    const std::string cmd = "\"" + cli + "\" train --config \"" + cfg_path.string() + "\" --out \"" + out.string() + "\" > \"" +
                            (work / ("determinism_" + std::to_string(i) + ".log")).string() + "\" 2>&1";
    codes[i] = std::system(cmd.c_str());
  }
  c.expect(codes[0] == 0 && codes[1] == 0, "train exit status");
  const std::string a = slurp(work / "determinism_0" / "runlog.csv"), b = slurp(work / "determinism_1" / "runlog.csv");
  c.expect(!a.empty() && a == b, "runlog.csv identical");
  detail = "runlog.csv " + std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::string cli, ablation_config, work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the command-line tool")->required();
  app.add_option("--ablation-config", ablation_config, "Base config for the ablation")->required()->check(CLI::ExistingFile);
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  bool ok = true;
  auto run = [&](int id, const char* title, const std::function<Check(std::string&)>& fn) {
    if (!wanted(id)) return;
    std::string detail;
    Check c;
    try {
      c = fn(detail);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    report(id, title, c, detail);
    ok = ok && c.failures.empty();
  };
  run(1, "reported balanced accuracy arithmetic", arithmetic);
  run(2, "gradient suite", gradients);
  run(3, "hand oracles", oracles);
  run(4, "contract invariants", [&](std::string& d) { return invariants(work, d); });
  run(5, "held-out generalization trend", [&](std::string& d) { return ablation(ablation_config, work, d); });
  run(6, "train determinism", [&](std::string& d) { return determinism(cli, work, d); });
  return ok ? 0 : 1;
}
