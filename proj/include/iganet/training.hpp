#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "iganet/data.hpp"
#include "iganet/metrics.hpp"
#include "iganet/model.hpp"

namespace iganet {

// Adam moments, kept flat per parameter tensor in canonical visitation order.
struct OptimState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
  long t = 0;
  std::vector<std::vector<double>> m, v;
};

OptimState init_optim(const ModelParams& params, double lr0);

// Gradients for one step, in the same canonical order as visit_params.
struct GradSet {
  std::vector<std::string> names;
  std::vector<std::vector<double>> grads;
};

GradSet collect_grads(Tape& tape, const ModelParams& attached);

// Bias-corrected Adam update. Scans all gradients before touching any
// parameter; a non-finite gradient aborts the step naming the tensor.
void adam_step(ModelParams& params, const GradSet& grads, OptimState& state);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 128;
  double lr0 = 1e-3;
  double lr_decay = 0.95;  // per epoch
  std::uint64_t seed = 42;
  int eval_every = 1;         // epochs between eval passes
  double flip_prob = 0.5;     // horizontal-flip augmentation probability
  bool augment = true;
  long max_steps = 0;               // 0 = no cap
  double stop_at_train_mpjpe = 0.0; // early stop threshold in mm; 0 = off
  bool verbose = false;
};

double lr_schedule(int epoch, const TrainConfig& cfg);  // lr0 * decay^epoch

// Mean per-joint Euclidean distance between pred and target (both [B x J x 3]
// or [J x 3], millimeters). This is the training loss and equals MPJPE.
Tensor mpjpe_loss(const Tensor& pred, const Tensor& target);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_mpjpe = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams params;       // after the last completed step
  ModelParams best_params;  // best by eval MPJPE (train loss when no val set)
  double best_metric = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> log;
  long steps = 0;
  bool diverged = false;
};

// Seeded shuffling + flip augmentation + Adam on the MPJPE loss. Logs one
// entry per epoch. On divergence (non-finite loss or gradient) training stops
// and the last good parameters are returned with `diverged` set.
TrainResult train(const Dataset& train_ds, const Dataset* val_ds, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const SkeletonGraph& graph);

struct EvalOptions {
  bool flip_merge = true;    // average predictions over the input and its flip
  bool per_action = false;
  bool report_no_flip = false;  // also record the plain pass when flip-merging
  int batch_size = 256;
};

EvalReport evaluate(const Dataset& ds, const ModelParams& params, const ModelConfig& cfg,
                    const SkeletonGraph& graph, const EvalOptions& opt = {});

std::string train_log_jsonl(const std::vector<EpochLog>& log);

// --- ablation ------------------------------------------------------------------

struct AblationRow {
  std::string name;
  bool use_gcn = true;
  bool use_g2a = true;
  bool use_a2g = true;
  bool use_umlp = true;
};

// The seven-row design-space grid: attention only, +GCN, each guidance
// direction alone, each with the uMLP, and the full block.
std::vector<AblationRow> default_ablation_grid();

struct AblationResult {
  AblationRow row;
  double eval_mpjpe = 0.0;
  double final_train_loss = 0.0;
  std::int64_t param_count = 0;
};

// Trains every row with the same seed and budget and evaluates on `val`
// (falls back to the training set when null).
std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid,
                                         const Dataset& train_ds, const Dataset* val_ds,
                                         ModelConfig base, TrainConfig tcfg,
                                         const SkeletonGraph& graph);

std::string ablation_table_text(const std::vector<AblationResult>& results);
std::string ablation_table_csv(const std::vector<AblationResult>& results);

}  // namespace iganet
