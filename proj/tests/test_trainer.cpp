#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include "mixalign/augment.hpp"
#include "mixalign/checkpoint.hpp"
#include "mixalign/objective.hpp"
#include "mixalign/optim.hpp"
#include "mixalign/trainer.hpp"
#include "test_util.hpp"

using namespace mixalign;
using testutil::read_file;
using testutil::scratch_dir;
using testutil::tiny_config;

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Train, SameSeedGivesIdenticalRunlog) {
  const auto a = scratch_dir("det"), b = scratch_dir("det");
  run_train(tiny_config(a));
  run_train(tiny_config(b));
  const std::string la = read_file(a / "runlog.csv");
  EXPECT_FALSE(la.empty());
  EXPECT_EQ(la, read_file(b / "runlog.csv"));
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
}

TEST(Train, WritesEveryArtifactAndOneRowPerEpoch) {
  const auto dir = scratch_dir("artifacts");
  const TrainResult r = run_train(tiny_config(dir, 3));
  for (const char* f : {"runlog.csv", "timing.csv", "metrics.csv", "config.resolved", "best.ckpt", "last.ckpt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto rows = csv_rows(read_file(dir / "runlog.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(r.rows.size(), 3u);
  EXPECT_TRUE(r.finished);
  EXPECT_EQ(parse_config(read_file(dir / "config.resolved")).seed, 7u);
}

TEST(Train, RunlogTotalIsSumOfTerms) {
  const auto dir = scratch_dir("terms");
  run_train(tiny_config(dir, 3));
  const auto rows = csv_rows(read_file(dir / "runlog.csv"));
  const auto& h = rows[0];
  auto col = [&](const std::string& name) { return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin()); };
  const std::size_t cls = col("l_cls"), al = col("align_term"), kd = col("kd_term"), tot = col("l_total");
  ASSERT_LT(tot, h.size());
  bool saw_kd = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double sum = std::stod(rows[i][cls]) + std::stod(rows[i][al]) + std::stod(rows[i][kd]);
    EXPECT_NEAR(std::stod(rows[i][tot]), sum, 1e-9);
    saw_kd = saw_kd || std::stod(rows[i][kd]) > 0.0;
    EXPECT_GT(std::stod(rows[i][al]), 0.0);
  }
  EXPECT_TRUE(saw_kd);
}

TEST(Train, ResumeAfterInterruptionIsBitExact) {
  const auto full = scratch_dir("full"), part = scratch_dir("part");
  TrainConfig cf = tiny_config(full, 3), cp = tiny_config(part, 3);
  run_train(cf);

  TrainOptions stop;
  stop.stop_after_epochs = 1;
  const TrainResult first = run_train(cp, stop);
  EXPECT_FALSE(first.finished);
  TrainOptions resume;
  resume.resume_from = (part / "last.ckpt").string();
  run_train(cp, resume);

  EXPECT_EQ(read_file(full / "runlog.csv"), read_file(part / "runlog.csv"));
  EXPECT_EQ(read_file(full / "metrics.csv"), read_file(part / "metrics.csv"));
  const Checkpoint a = Checkpoint::load((full / "last.ckpt").string());
  const Checkpoint b = Checkpoint::load((part / "last.ckpt").string());
  EXPECT_EQ(a.arrays, b.arrays);
  EXPECT_EQ(a.text("rng.mix"), b.text("rng.mix"));
}

TEST(Train, ResumeRejectsForeignCheckpoint) {
  const auto dir = scratch_dir("foreign");
  run_train(tiny_config(dir, 1));
  TrainConfig other = tiny_config(scratch_dir("foreign2"), 1);
  other.seed = 8;
  TrainOptions o;
  o.resume_from = (dir / "last.ckpt").string();
  EXPECT_THROW(run_train(other, o), TrainingError);
}

// With every auxiliary component off, the trainer must follow the plain
// classification loop step for step.
TEST(Train, BaselineMatchesHandWrittenLoop) {
  const auto dir = scratch_dir("baseline");
  const TrainConfig cfg = with_components(tiny_config(dir, 2), Component::None);
  run_train(cfg);

  const auto data = load_data(cfg.data);
  Rng init(derive_seed(cfg.seed, 1));
  ModelState m = init_model(cfg.arch, cfg.mixstyle, init);
  m.mixstyle_enabled = false;
  AdamWState adam = AdamWState::for_params(m.parameters());
  Rng unused(0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order(derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(epoch)));
    Rng aug(derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(epoch)));
    for (const auto& idx : round_robin_batches(data->train.samples, cfg.batch_size, order)) {
      std::vector<Image> imgs;
      std::vector<const Sample*> smp;
      for (std::size_t i : idx) {
        imgs.push_back(augment(data->train.images[i], cfg.augment, aug));
        smp.push_back(&data->train.samples[i]);
      }
      std::vector<const Image*> ptrs;
      for (const auto& im : imgs) ptrs.push_back(&im);
      const DomainBatch batch = make_batch(ptrs, smp);
      const Tensor loss = bce_with_logits(binary_logit(forward(m, batch.images, unused).logits), batch.labels);
      m.zero_grad();
      loss.backward();
      clip_grad_norm(m.parameters(), cfg.clip_norm);
      adamw_step(m.parameters(), adam, cfg.optim);
    }
  }
  const Checkpoint ckpt = Checkpoint::load((dir / "last.ckpt").string());
  for (const auto& p : m.parameters()) {
    const auto& got = ckpt.array("student." + p.name);
    ASSERT_EQ(got.size(), p.tensor.numel());
    EXPECT_TRUE(std::equal(got.begin(), got.end(), p.tensor.data().begin())) << p.name;
  }
}

TEST(Train, SmallSmokeRunIsFast) {
  TrainConfig cfg = tiny_config(scratch_dir("smoke"), 1);
  cfg.data.samples_per_domain = 32;  // 64 samples over two training domains
  cfg.arch = ModelArch{};
  const auto t0 = std::chrono::steady_clock::now();
  run_train(cfg);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
}

TEST(Eval, UntrainedModelIsAtChance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg = tiny_config(scratch_dir("chance"), 1);
    cfg.seed = seed;
    cfg.arch = ModelArch{};
    cfg.data.imbalance_ratio = 1.0;
    cfg.data.samples_per_domain = 200;
    const auto data = load_data(cfg.data);
    Rng init(derive_seed(seed, 1));
    const ModelState m = init_model(cfg.arch, cfg.mixstyle, init);
    EXPECT_NEAR(evaluate_model(m, data->heldout, 0.5).balanced_accuracy, 0.5, 0.05) << "seed " << seed;
  }
}

TEST(Eval, RepeatableAndDomainSeparated) {
  const auto dir = scratch_dir("eval");
  const TrainConfig cfg = tiny_config(dir, 1);
  run_train(cfg);
  const std::string ckpt = (dir / "best.ckpt").string();
  const MetricsReport a = run_eval(ckpt, SplitName::Heldout), b = run_eval(ckpt, SplitName::Heldout);
  EXPECT_EQ(a.balanced_accuracy, b.balanced_accuracy);
  EXPECT_EQ(a.roc_auc, b.roc_auc);
  EvalOptions student;
  student.use_student = true;
  const MetricsReport s = run_eval(ckpt, SplitName::Val, student);
  EXPECT_EQ(s.n_pos + s.n_neg, 2u * 6u);

  const DatasetSplit split = make_split(cfg.data);
  for (const auto& x : split.heldout) EXPECT_GE(x.domain_id, cfg.data.train_domains);

  TrainConfig changed = cfg;
  changed.optim.lr = 0.5;
  std::ostringstream warn;
  EvalOptions with_config;
  with_config.config = &changed;
  with_config.warnings = &warn;
  run_eval(ckpt, SplitName::Val, with_config);
  EXPECT_NE(warn.str().find("hash mismatch"), std::string::npos);
}

TEST(Ablation, TableShapeAndBaselineCell) {
  const auto root = scratch_dir("ablation");
  TrainConfig base = tiny_config(root, 1);
  const std::vector<Component> cells{Component::None, Component::All};
  const AblationResult r = run_ablation(base, 2, cells);
  EXPECT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(csv_rows(read_file(root / "ablation.csv")).size(), 5u);
  EXPECT_EQ(csv_rows(read_file(root / "ablation_summary.csv")).size(), 3u);

  TrainConfig none = with_components(base, Component::None);
  none.out_dir = scratch_dir("ablation_ref").string();
  const TrainResult ref = run_train(none);
  EXPECT_EQ(r.rows[0].heldout.balanced_accuracy, ref.heldout_ema.balanced_accuracy);
  EXPECT_EQ(r.rows[0].heldout.roc_auc, ref.heldout_ema.roc_auc);
  EXPECT_EQ(read_file(root / "none_seed7" / "runlog.csv"), read_file(std::filesystem::path(none.out_dir) / "runlog.csv"));
}
