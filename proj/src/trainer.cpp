#include "mixalign/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mixalign/align_loss.hpp"
#include "mixalign/augment.hpp"
#include "mixalign/checkpoint.hpp"
#include "mixalign/ema_distill.hpp"
#include "mixalign/optim.hpp"

namespace mixalign {

namespace fs = std::filesystem;

namespace {

// Independent random streams, so toggling one component does not shift the
// draws seen by another.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kOrderStream = 2;
constexpr std::uint64_t kAugmentStream = 3;
constexpr std::uint64_t kMixStream = 4;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw TrainingError("cannot write " + tmp.string());
    out << text;
    if (!out) throw TrainingError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string metrics_fields(const MetricsReport& m) {
  return g17(m.balanced_accuracy) + "," + g17(m.sensitivity) + "," + g17(m.specificity) + "," + g17(m.roc_auc);
}

std::vector<int> labels_of(const Dataset& d) {
  std::vector<int> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) out.push_back(s.label);
  return out;
}

ModelState build_model(const TrainConfig& config) {
  Rng init(derive_seed(config.seed, kInitStream));
  ModelState m = init_model(config.arch, config.mixstyle, init);
  m.mixstyle_enabled = config.mixstyle_enabled;
  return m;
}

// Everything needed to continue a run exactly where it stopped.
struct RunState {
  ModelState student;
  EmaTeacher teacher;
  AdamWState adam;
  Rng mix_rng;
  PlateauScheduler sched;
  EarlyStopping stopper;
  double lr = 0.0;
  int next_epoch = 0;
  std::uint64_t step = 0;
  int best_epoch = -1;
  std::vector<std::string> runlog;
  std::vector<std::string> timing;
};

Checkpoint snapshot(const RunState& s, const TrainConfig& config) {
  Checkpoint c;
  c.config_hash = config_hash(config);
  store_params(c, "student.", s.student);
  store_params(c, "teacher.", s.teacher.model);
  const auto params = s.student.parameters();
  for (std::size_t i = 0; i < params.size() && i < s.adam.m.size(); ++i) {
    c.arrays["adam.m." + params[i].name] = s.adam.m[i];
    c.arrays["adam.v." + params[i].name] = s.adam.v[i];
  }
  c.arrays["state.scalars"] = {static_cast<double>(s.next_epoch),
                               static_cast<double>(s.step),
                               s.lr,
                               static_cast<double>(s.adam.step),
                               s.sched.best,
                               static_cast<double>(s.sched.bad_epochs),
                               s.stopper.best,
                               static_cast<double>(s.stopper.bad_epochs),
                               static_cast<double>(s.best_epoch)};
  c.texts["config"] = to_text(config);
  c.texts["rng.mix"] = s.mix_rng.state();
  std::string log, timing;
  for (const auto& l : s.runlog) log += l + "\n";
  for (const auto& l : s.timing) timing += l + "\n";
  c.texts["runlog"] = log;
  c.texts["timing"] = timing;
  return c;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

void restore(RunState& s, const Checkpoint& c) {
  restore_params(c, "student.", s.student);
  restore_params(c, "teacher.", s.teacher.model);
  const auto params = s.student.parameters();
  s.adam = AdamWState::for_params(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.adam.m[i] = c.array("adam.m." + params[i].name);
    s.adam.v[i] = c.array("adam.v." + params[i].name);
  }
  const auto& sc = c.array("state.scalars");
  if (sc.size() != 9) throw CheckpointError("checkpoint: malformed state.scalars");
  s.next_epoch = static_cast<int>(sc[0]);
  s.step = static_cast<std::uint64_t>(sc[1]);
  s.lr = sc[2];
  s.adam.step = static_cast<std::uint64_t>(sc[3]);
  s.sched.best = sc[4];
  s.sched.bad_epochs = static_cast<int>(sc[5]);
  s.stopper.best = sc[6];
  s.stopper.bad_epochs = static_cast<int>(sc[7]);
  s.best_epoch = static_cast<int>(sc[8]);
  s.mix_rng.set_state(c.text("rng.mix"));
  s.runlog = split_lines(c.text("runlog"));
  s.timing = split_lines(c.text("timing"));
}

[[noreturn]] void dump_and_abort(const fs::path& dir, int epoch, std::uint64_t step, const DomainBatch& batch,
                                 const Tensor& logits, const std::string& what) {
  const fs::path path = dir / "nonfinite_dump.txt";
  std::ofstream out(path);
  out << "epoch " << epoch << " step " << step << "\n" << what << "\n";
  out << "index,domain,label,z0,z1\n";
  for (std::size_t i = 0; i < batch.label_ints.size(); ++i) {
    out << i << "," << batch.domain_ids[i] << "," << batch.label_ints[i];
    if (logits.defined() && logits.numel() == 2 * batch.label_ints.size()) {
      out << "," << g17(logits.data()[2 * i]) << "," << g17(logits.data()[2 * i + 1]);
    }
    out << "\n";
  }
  throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                      " (" + what + "); batch dumped to " + path.string());
}

}  // namespace

const Dataset& DataBundle::get(SplitName name) const {
  switch (name) {
    case SplitName::Train: return train;
    case SplitName::Val: return val;
    case SplitName::Heldout: return heldout;
  }
  throw std::invalid_argument("unknown split");
}

std::shared_ptr<const DataBundle> load_data(const GeneratorConfig& config) {
  auto b = std::make_shared<DataBundle>();
  b->config = config;
  b->split = make_split(config);
  b->train = materialize(config, b->split.train);
  b->val = materialize(config, b->split.val);
  b->heldout = materialize(config, b->split.heldout);
  return b;
}

void store_params(Checkpoint& ckpt, const std::string& prefix, const ModelState& model) {
  for (const auto& p : model.parameters()) {
    ckpt.arrays[prefix + p.name] = std::vector<double>(p.tensor.data().begin(), p.tensor.data().end());
  }
}

void restore_params(const Checkpoint& ckpt, const std::string& prefix, ModelState& model) {
  for (auto& p : model.parameters()) {
    const auto& src = ckpt.array(prefix + p.name);
    if (src.size() != p.tensor.numel()) {
      throw CheckpointError("checkpoint: " + prefix + p.name + " has " + std::to_string(src.size()) + " values, model expects " +
                            std::to_string(p.tensor.numel()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::vector<double> predict(const ModelState& model, const Dataset& data, std::size_t chunk) {
  NoGradGuard guard;
  ModelState eval = model;
  eval.training = false;
  Rng unused(0);
  std::vector<double> out;
  out.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); i += chunk) {
    const std::size_t end = std::min(data.samples.size(), i + chunk);
    std::vector<const Image*> imgs;
    std::vector<const Sample*> smp;
    for (std::size_t k = i; k < end; ++k) {
      imgs.push_back(&data.images[k]);
      smp.push_back(&data.samples[k]);
    }
    const DomainBatch batch = make_batch(imgs, smp);
    const auto p = positive_probability(forward(eval, batch.images, unused).logits);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

MetricsReport evaluate_model(const ModelState& model, const Dataset& data, double threshold) {
  const auto scores = predict(model, data);
  const auto labels = labels_of(data);
  return evaluate_scores(scores, labels, threshold);
}

std::string runlog_header() {
  return "epoch,lr,l_cls,l_align,l_kd,lambda_align,lambda_kd,align_term,kd_term,l_total,"
         "train_ba,train_sens,train_spec,train_auc,"
         "val_student_ba,val_student_sens,val_student_spec,val_student_auc,"
         "val_ema_ba,val_ema_sens,val_ema_spec,val_ema_auc";
}

std::string runlog_line(const EpochRow& r) {
  const LossBreakdown& l = r.loss;
  return std::to_string(r.epoch) + "," + g17(r.lr) + "," + g17(l.l_cls) + "," + g17(l.l_align) + "," + g17(l.l_kd) + "," +
         g17(l.lambda_align) + "," + g17(l.lambda_kd) + "," + g17(r.align_term) + "," + g17(r.kd_term) + "," +
         g17(l.l_total) + "," + metrics_fields(r.train_student) + "," + metrics_fields(r.val_student) + "," +
         metrics_fields(r.val_ema);
}

TrainResult run_train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  write_file(dir / "config.resolved", to_text(config));

  auto data = options.data;
  if (data) {
    // A shared bundle must match this run's generator settings.
    TrainConfig other = config;
    other.data = data->config;
    if (to_text(other) != to_text(config)) data.reset();
  }
  if (!data) data = load_data(config.data);
  const Dataset& train = data->train;
  const Dataset& val = data->val;

  std::vector<int> known;
  for (int d = 0; d < config.data.train_domains; ++d) known.push_back(d);

  RunState s;
  s.student = build_model(config);
  s.teacher = make_teacher(s.student, config.ema_momentum);
  s.mix_rng = Rng(derive_seed(config.seed, kMixStream));
  s.sched = config.sched;
  s.lr = config.optim.lr;
  s.adam = AdamWState::for_params(s.student.parameters());
  s.stopper.patience = config.early_stop_patience;
  s.runlog.push_back(runlog_header());
  s.timing.push_back("epoch,seconds");
  if (!options.resume_from.empty()) {
    const Checkpoint c = Checkpoint::load(options.resume_from);
    if (c.config_hash != config_hash(config)) throw TrainingError("resume: checkpoint was written by a different config");
    restore(s, c);
  }

  Rng probe(0);
  const std::size_t per_epoch = round_robin_batches(train.samples, config.batch_size, probe).size();
  const std::uint64_t total_steps = static_cast<std::uint64_t>(per_epoch) * static_cast<std::uint64_t>(config.epochs);

  TrainResult result;
  bool stopped = s.stopper.should_stop();
  for (int epoch = s.next_epoch; epoch < config.epochs && !stopped; ++epoch) {
    if (options.stop_after_epochs >= 0 && epoch >= options.stop_after_epochs) break;
    const auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(config.seed, kOrderStream, static_cast<std::uint64_t>(epoch)));
    Rng aug_rng(derive_seed(config.seed, kAugmentStream, static_cast<std::uint64_t>(epoch)));
    const auto batches = round_robin_batches(train.samples, config.batch_size, order_rng);

    EpochRow row;
    row.epoch = epoch;
    row.lr = s.lr;
    std::vector<double> train_scores;
    std::vector<int> train_labels;
    AdamWConfig opt = config.optim;
    opt.lr = s.lr;
    const double lambda_kd_epoch = config.kd_enabled ? kd_lambda(epoch, config.kd) : 0.0;

    for (const auto& idx : batches) {
      std::vector<Image> augmented;
      std::vector<const Image*> imgs;
      std::vector<const Sample*> smp;
      augmented.reserve(idx.size());
      for (std::size_t i : idx) {
        if (config.augment_enabled) augmented.push_back(augment(train.images[i], config.augment, aug_rng));
        smp.push_back(&train.samples[i]);
      }
      for (std::size_t k = 0; k < idx.size(); ++k) imgs.push_back(config.augment_enabled ? &augmented[k] : &train.images[idx[k]]);
      const DomainBatch batch = make_batch(imgs, smp);

      const double progress = static_cast<double>(s.step) / static_cast<double>(total_steps);
      const double la = config.align_enabled ? config.align_scale * dann_lambda(progress, config.dann_gamma) : 0.0;
      const bool kd_now = config.kd_every_batch || s.step % static_cast<std::uint64_t>(config.kd_interval) == 0;
      const double lk = kd_now ? lambda_kd_epoch : 0.0;

      s.student.training = true;
      ForwardOutput out;
      LossBreakdown bd;
      Tensor total;
      try {
        out = forward(s.student, batch.images, s.mix_rng);
        Tensor teacher_logits;
        if (lk > 0.0) teacher_logits = teacher_forward(s.teacher, batch.images);
        ObjectiveTerms terms;
        terms.cls = bce_with_logits(binary_logit(out.logits), batch.labels);
        if (la > 0.0) {
          const DomainPartition part = drop_absent_domains(batch.domain_ids, known);
          terms.align = alignment_loss(channel_descriptor(out.features), part);
        }
        if (lk > 0.0) terms.kd = kd_loss(out.logits, teacher_logits, config.kd.temperature);
        total = total_loss(terms, la, lk, &bd);
      } catch (const std::domain_error& e) {
        dump_and_abort(dir, epoch, s.step, batch, out.logits, e.what());
      }
      const auto params = s.student.parameters();
      s.student.zero_grad();
      total.backward();
      clip_grad_norm(params, config.clip_norm);
      adamw_step(params, s.adam, opt);
      const double m = config.ema_ramp ? std::min(config.ema_momentum, (1.0 + static_cast<double>(s.step)) /
                                                                             (10.0 + static_cast<double>(s.step)))
                                       : config.ema_momentum;
      ema_update(s.teacher, s.student, m);
      ++s.step;

      row.loss.l_cls += bd.l_cls;
      row.loss.l_align += bd.l_align;
      row.loss.l_kd += bd.l_kd;
      row.loss.lambda_align += bd.lambda_align;
      row.loss.lambda_kd += bd.lambda_kd;
      row.loss.l_total += bd.l_total;
      row.align_term += bd.lambda_align * bd.l_align;
      row.kd_term += bd.lambda_kd * bd.l_kd;
      const auto p = positive_probability(out.logits);
      train_scores.insert(train_scores.end(), p.begin(), p.end());
      train_labels.insert(train_labels.end(), batch.label_ints.begin(), batch.label_ints.end());
    }
    const double nb = static_cast<double>(batches.size());
    for (double* v : {&row.loss.l_cls, &row.loss.l_align, &row.loss.l_kd, &row.loss.lambda_align, &row.loss.lambda_kd,
                      &row.loss.l_total, &row.align_term, &row.kd_term}) {
      *v /= nb;
    }
    row.train_student = evaluate_scores(train_scores, train_labels, config.threshold);
    row.val_student = evaluate_model(s.student, val, config.threshold);
    row.val_ema = evaluate_model(s.teacher.model, val, config.threshold);

    const double metric = row.val_ema.balanced_accuracy;
    s.lr = s.sched.step(metric, s.lr);
    const bool improved = s.stopper.update(metric);
    s.next_epoch = epoch + 1;
    s.runlog.push_back(runlog_line(row));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.timing.push_back(std::to_string(epoch) + "," + g17(secs));
    if (improved) {
      s.best_epoch = epoch;
      snapshot(s, config).save((dir / "best.ckpt").string());
    }
    snapshot(s, config).save((dir / "last.ckpt").string());
    result.rows.push_back(row);
    stopped = s.stopper.should_stop();
    if (options.progress != nullptr) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "epoch %d lr %.2e loss %.4f val_ba student %.4f ema %.4f%s (%.1fs)\n", epoch, row.lr,
                    row.loss.l_total, row.val_student.balanced_accuracy, metric, improved ? " *" : "", secs);
      *options.progress << buf << std::flush;
    }
  }

  std::string log, timing;
  for (const auto& l : s.runlog) log += l + "\n";
  for (const auto& l : s.timing) timing += l + "\n";
  write_file(dir / "runlog.csv", log);
  write_file(dir / "timing.csv", timing);

  result.best_epoch = s.best_epoch;
  result.best_val_ema = s.stopper.best;
  result.stopped_early = stopped;
  result.finished = stopped || s.next_epoch >= config.epochs;
  if (!result.finished) return result;

  // Final report from the best checkpoint; held-out data is only looked at here.
  const Checkpoint best = Checkpoint::load((dir / "best.ckpt").string());
  ModelState ema = build_model(config), student = build_model(config);
  restore_params(best, "teacher.", ema);
  restore_params(best, "student.", student);
  result.val_ema = evaluate_model(ema, val, config.threshold);
  result.heldout_ema = evaluate_model(ema, data->heldout, config.threshold);
  result.heldout_student = evaluate_model(student, data->heldout, config.threshold);
  const MetricsReport val_student = evaluate_model(student, val, config.threshold);
  std::string metrics = "model,split,balanced_accuracy,sensitivity,specificity,roc_auc,n_pos,n_neg,threshold\n";
  auto add = [&](const char* model, const char* split, const MetricsReport& m) {
    metrics += std::string(model) + "," + split + "," + metrics_fields(m) + "," + std::to_string(m.n_pos) + "," +
               std::to_string(m.n_neg) + "," + g17(m.threshold) + "\n";
  };
  add("ema", "val", result.val_ema);
  add("ema", "heldout", result.heldout_ema);
  add("student", "val", val_student);
  add("student", "heldout", result.heldout_student);
  write_file(dir / "metrics.csv", metrics);
  return result;
}

MetricsReport run_eval(const std::string& checkpoint_path, SplitName split, const EvalOptions& options) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  const TrainConfig embedded = parse_config(ckpt.text("config"));
  const TrainConfig config = options.config != nullptr ? *options.config : embedded;
  if (ckpt.config_hash != config_hash(config) && options.warnings != nullptr) {
    *options.warnings << "warning: config hash mismatch (checkpoint " << ckpt.config_hash << ", config "
                      << config_hash(config) << ")\n";
  }
  ModelState model = build_model(embedded);
  restore_params(ckpt, options.use_student ? "student." : "teacher.", model);
  auto data = options.data;
  if (!data) data = load_data(config.data);
  return evaluate_model(model, data->get(split), config.threshold);
}

AblationResult run_ablation(const TrainConfig& base, int seeds, std::span<const Component> cells, std::ostream* progress) {
  if (seeds < 1) throw ConfigError("ablation: seeds must be >= 1");
  base.validate();
  const fs::path root = base.out_dir;
  fs::create_directories(root);
  const auto data = load_data(base.data);
  AblationResult result;
  for (Component c : cells) {
    for (int k = 0; k < seeds; ++k) {
      TrainConfig cfg = with_components(base, c);
      cfg.seed = base.seed + static_cast<std::uint64_t>(k);
      cfg.out_dir = (root / (std::string(component_name(c)) + "_seed" + std::to_string(cfg.seed))).string();
      TrainOptions opts;
      opts.data = data;
      const TrainResult r = run_train(cfg, opts);
      result.rows.push_back({c, cfg.seed, r.heldout_ema, r.val_ema, r.best_epoch});
      if (progress != nullptr) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%-8s seed %llu heldout ba %.4f auc %.4f (best epoch %d)\n", component_name(c),
                      static_cast<unsigned long long>(cfg.seed), r.heldout_ema.balanced_accuracy, r.heldout_ema.roc_auc,
                      r.best_epoch);
        *progress << buf << std::flush;
      }
    }
  }
  std::string rows = "component,seed,heldout_ba,heldout_sens,heldout_spec,heldout_auc,val_ba,best_epoch\n";
  for (const auto& r : result.rows) {
    rows += std::string(component_name(r.component)) + "," + std::to_string(r.seed) + "," + metrics_fields(r.heldout) + "," +
            g17(r.val.balanced_accuracy) + "," + std::to_string(r.best_epoch) + "\n";
  }
  write_file(root / "ablation.csv", rows);
  std::string summary = "component,runs,mean_heldout_ba,std_heldout_ba,mean_heldout_auc,std_heldout_auc\n";
  for (Component c : cells) {
    std::vector<double> ba, auc;
    for (const auto& r : result.rows) {
      if (r.component != c) continue;
      ba.push_back(r.heldout.balanced_accuracy);
      auc.push_back(r.heldout.roc_auc);
    }
    auto mean_std = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      return std::pair{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
    };
    const auto [mb, sb] = mean_std(ba);
    const auto [ma, sa] = mean_std(auc);
    result.summary.push_back({c, mb, sb, ma, sa});
    summary += std::string(component_name(c)) + "," + std::to_string(ba.size()) + "," + g17(mb) + "," + g17(sb) + "," + g17(ma) +
               "," + g17(sa) + "\n";
  }
  write_file(root / "ablation_summary.csv", summary);
  return result;
}

}  // namespace mixalign
