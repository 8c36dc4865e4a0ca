// Command-line driver: train, eval, ablate, gradcheck, datapreview.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mixalign/checkpoint.hpp"
#include "mixalign/config.hpp"
#include "mixalign/gradcheck.hpp"
#include "mixalign/synth.hpp"
#include "mixalign/trainer.hpp"

namespace fs = std::filesystem;
using namespace mixalign;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kTraining = 4, kCheck = 5 };

int fail(Exit code, const char* kind, const std::string& message) {
  std::string one_line = message;
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "mixalign: error: " << kind << ": " << one_line << "\n";
  return code;
}

void print_report(const std::string& label, const MetricsReport& m) {
  std::printf("%s balanced_accuracy=%.4f sensitivity=%.4f specificity=%.4f roc_auc=%.4f n_pos=%zu n_neg=%zu threshold=%.3f\n",
              label.c_str(), m.balanced_accuracy, m.sensitivity, m.specificity, m.roc_auc, m.n_pos, m.n_neg, m.threshold);
}

SplitName parse_split(const std::string& s) {
  if (s == "train") return SplitName::Train;
  if (s == "val") return SplitName::Val;
  if (s == "heldout") return SplitName::Heldout;
  throw ConfigError("unknown split '" + s + "'");
}

void write_ppm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << kImageSize << " " << kImageSize << "\n255\n";
  for (std::size_t y = 0; y < kImageSize; ++y) {
    for (std::size_t x = 0; x < kImageSize; ++x) {
      for (std::size_t c = 0; c < kImageChannels; ++c) {
        out.put(static_cast<char>(static_cast<int>(img.at(c, y, x) * 255.0 + 0.5)));
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-generalizing classifier: training, evaluation and ablations on synthetic multi-domain data"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume, ckpt_path, split = "heldout", cells_arg = "none,mixstyle,align,kd,all";
  std::uint64_t seed = 0;
  int seeds = 5, grad_seeds = 20, per_domain = 6;
  bool use_student = false;

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", seed, "Override run.seed");
  train->add_option("--out", out_dir, "Override run.out_dir");
  train->add_option("--resume", resume, "Continue from a last.ckpt")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train|val|heldout")->check(CLI::IsMember({"train", "val", "heldout"}));
  eval->add_option("--config", config_path, "Use this config instead of the embedded one")->check(CLI::ExistingFile);
  eval->add_flag("--student", use_student, "Evaluate student weights instead of the EMA teacher");

  auto* ablate = app.add_subcommand("ablate", "Run the component ablation matrix");
  ablate->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Seeds per cell")->check(CLI::PositiveNumber);
  ablate->add_option("--cells", cells_arg, "Comma-separated cells");
  ablate->add_option("--out", out_dir, "Override run.out_dir");

  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad->add_option("--seeds", grad_seeds, "Seeds per case")->check(CLI::PositiveNumber);

  auto* preview = app.add_subcommand("datapreview", "Dump sample images per domain as PPM files");
  preview->add_option("--out", out_dir, "Output directory")->required();
  preview->add_option("--config", config_path, "Config file for generator settings")->check(CLI::ExistingFile);
  preview->add_option("--per-domain", per_domain, "Images per domain")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (*train) {
      TrainConfig cfg = load_config(config_path);
      if (*seed_opt) cfg.seed = seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      TrainOptions opts;
      opts.resume_from = resume;
      opts.progress = &std::cerr;
      const TrainResult r = run_train(cfg, opts);
      std::printf("best_epoch=%d best_val_ema_ba=%.4f stopped_early=%d out=%s\n", r.best_epoch, r.best_val_ema,
                  r.stopped_early ? 1 : 0, cfg.out_dir.c_str());
      print_report("heldout_ema", r.heldout_ema);
      print_report("heldout_student", r.heldout_student);
    } else if (*eval) {
      EvalOptions opts;
      opts.use_student = use_student;
      opts.warnings = &std::cerr;
      TrainConfig override_cfg;
      if (!config_path.empty()) {
        override_cfg = load_config(config_path);
        opts.config = &override_cfg;
      }
      const MetricsReport m = run_eval(ckpt_path, parse_split(split), opts);
      const std::string label = std::string(use_student ? "student_" : "ema_") + split;
      print_report(label, m);
      const fs::path report = fs::path(ckpt_path).parent_path() / ("eval_" + label + ".csv");
      std::ofstream out(report);
      out << "model,split,balanced_accuracy,sensitivity,specificity,roc_auc,n_pos,n_neg,threshold\n";
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g,%zu,%zu,%.17g\n", use_student ? "student" : "ema",
                    split.c_str(), m.balanced_accuracy, m.sensitivity, m.specificity, m.roc_auc, m.n_pos, m.n_neg, m.threshold);
      out << buf;
    } else if (*ablate) {
      TrainConfig cfg = load_config(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      std::vector<Component> cells;
      std::stringstream ss(cells_arg);
      for (std::string item; std::getline(ss, item, ',');) cells.push_back(parse_component(item));
      const AblationResult r = run_ablation(cfg, seeds, cells, &std::cerr);
      std::printf("component,mean_heldout_ba,std_heldout_ba,mean_heldout_auc,std_heldout_auc\n");
      for (const auto& s : r.summary) {
        std::printf("%s,%.4f,%.4f,%.4f,%.4f\n", component_name(s.component), s.mean_ba, s.std_ba, s.mean_auc, s.std_auc);
      }
    } else if (*grad) {
      const auto results = run_gradcheck_suite(grad_seeds, &std::cout);
      int failed = 0;
      for (const auto& r : results) failed += r.passed ? 0 : 1;
      if (failed > 0) return fail(kCheck, "gradcheck", std::to_string(failed) + " case(s) exceeded tolerance");
    } else if (*preview) {
      GeneratorConfig gen = config_path.empty() ? GeneratorConfig{} : load_config(config_path).data;
      fs::create_directories(out_dir);
      const auto domains = make_domains(gen);
      for (const auto& d : domains) {
        for (int i = 0; i < per_domain; ++i) {
          const auto idx = static_cast<std::size_t>(i);
          const int label = sample_label(gen, d.domain_id, idx);
          const fs::path p = fs::path(out_dir) / ("domain" + std::to_string(d.domain_id) + "_" + std::to_string(i) + "_label" +
                                                  std::to_string(label) + ".ppm");
          write_ppm(p, render_sample(gen, d, idx));
        }
      }
      std::printf("wrote %zu images to %s\n", domains.size() * static_cast<std::size_t>(per_domain), out_dir.c_str());
    }
  } catch (const ConfigError& e) {
    return fail(kUsage, "config", e.what());
  } catch (const CheckpointError& e) {
    return fail(kIo, "checkpoint", e.what());
  } catch (const TrainingError& e) {
    return fail(kTraining, "training", e.what());
  } catch (const std::exception& e) {
    return fail(kFailure, "runtime", e.what());
  }
  return kOk;
}
