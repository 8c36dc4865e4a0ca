#pragma once

// Training, evaluation and ablation drivers.

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mixalign/checkpoint.hpp"
#include "mixalign/config.hpp"
#include "mixalign/metrics.hpp"
#include "mixalign/objective.hpp"
#include "mixalign/synth.hpp"

namespace mixalign {

// Rendered images for every split of one generator configuration.
struct DataBundle {
  GeneratorConfig config;
  DatasetSplit split;
  Dataset train;
  Dataset val;
  Dataset heldout;

  const Dataset& get(SplitName name) const;
};

std::shared_ptr<const DataBundle> load_data(const GeneratorConfig& config);

struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  // Epoch means of the per-step values. align_term and kd_term are the
  // means of lambda * loss, so l_total = l_cls + align_term + kd_term.
  LossBreakdown loss;
  double align_term = 0.0;
  double kd_term = 0.0;
  MetricsReport train_student;  // from the training-mode predictions of the epoch
  MetricsReport val_student;
  MetricsReport val_ema;
};

std::string runlog_header();
std::string runlog_line(const EpochRow& row);

struct TrainOptions {
  std::string resume_from;            // path of a last.ckpt to continue from
  int stop_after_epochs = -1;         // simulate an interruption after this many epochs (total)
  std::shared_ptr<const DataBundle> data;  // reuse already rendered images
  std::ostream* progress = nullptr;   // one line per epoch when set
};

struct TrainResult {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_val_ema = 0.0;
  bool stopped_early = false;
  bool finished = false;  // false when stop_after_epochs cut the run short
  MetricsReport heldout_ema;
  MetricsReport heldout_student;
  MetricsReport val_ema;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes runlog.csv, timing.csv, metrics.csv, config.resolved, best.ckpt and
// last.ckpt into config.out_dir.
TrainResult run_train(const TrainConfig& config, const TrainOptions& options = {});

struct EvalOptions {
  bool use_student = false;            // EMA weights by default
  const TrainConfig* config = nullptr;  // overrides the embedded config; hash mismatch warns
  std::ostream* warnings = nullptr;
  std::shared_ptr<const DataBundle> data;
};

MetricsReport run_eval(const std::string& checkpoint_path, SplitName split, const EvalOptions& options = {});

// Eval-mode probabilities of the positive class.
std::vector<double> predict(const ModelState& model, const Dataset& data, std::size_t chunk = 128);
MetricsReport evaluate_model(const ModelState& model, const Dataset& data, double threshold);

struct AblationRow {
  Component component = Component::None;
  std::uint64_t seed = 0;
  MetricsReport heldout;
  MetricsReport val;
  int best_epoch = -1;
};

struct AblationSummary {
  Component component = Component::None;
  double mean_ba = 0.0;
  double std_ba = 0.0;
  double mean_auc = 0.0;
  double std_auc = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
};

// Runs every component cell for seeds base.seed, base.seed+1, ...; each run
// writes to out_dir/<cell>_seed<k>. Writes ablation.csv (one row per run) and
// ablation_summary.csv (mean and sample std per cell).
AblationResult run_ablation(const TrainConfig& base, int seeds, std::span<const Component> cells, std::ostream* progress = nullptr);

// Model parameters as named checkpoint arrays.
void store_params(Checkpoint& ckpt, const std::string& prefix, const ModelState& model);
void restore_params(const Checkpoint& ckpt, const std::string& prefix, ModelState& model);

}  // namespace mixalign
