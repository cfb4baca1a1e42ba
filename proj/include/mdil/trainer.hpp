#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mdil/eval.hpp"
#include "mdil/model.hpp"
#include "mdil/synth.hpp"

namespace mdil {

enum class DistillMode { all, last };

/// Within-step learning-rate schedule. poly: lr * (1 - i / n)^0.9 over the
/// n iterations of the step, restarted at every step.
enum class LrSchedule { constant, poly };

struct TrainConfig {
  double lr = 0.05;
  /// LR(W_t) / LR(W_s) from step 2 on. Ignored when freeze_shared is set.
  double dlr = 100.0;
  /// Shared parameters get learning rate exactly 0 from step 2 on.
  bool freeze_shared = false;
  double lambda_kld = 1.0;
  /// Distill previous domains' predictions into the current model.
  bool use_kld = true;
  DistillMode distill = DistillMode::all;
  /// How a new domain's adapters, DS-BN and decoder are initialised.
  InitMode init = InitMode::init_wt;
  /// Epochs of the incremental steps t >= 2.
  int epochs = 10;
  /// Epochs of step 1, which trains the shared encoder from scratch.
  int first_epochs = 30;
  /// Mini-batch size of the incremental steps t >= 2.
  int batch_size = 1;
  /// Mini-batch size of step 1.
  int first_batch_size = 4;
  double momentum = 0.9;
  LrSchedule schedule = LrSchedule::constant;
  std::uint64_t seed = 1;

  void validate() const;
  int epochs_for(int t) const { return t == 1 ? first_epochs : epochs; }
  int batch_for(int t) const { return t == 1 ? first_batch_size : batch_size; }
  /// "key = value" lines for provenance.
  std::vector<std::string> echo() const;
};

struct LossBundle {
  Tensor l_ce;
  Tensor l_kld;
  Tensor l_ws;  // l_ce + l_kld
};

struct EpochLoss {
  double ce = 0;
  double kld = 0;
  double ws = 0;
};

struct DomainEval {
  std::string domain;
  ConfusionMatrix cm;
  double miou = 0;  // percent
};

struct StepReport {
  int step = 0;
  std::string domain;
  std::vector<EpochLoss> epochs;
  std::vector<DomainEval> evals;  // every registered domain, in registration order
  double wall_seconds = 0;
  std::vector<std::string> echo;

  const DomainEval& eval_of(const std::string& domain) const;
};

/// One domain of an incremental sequence. Training data is loaded lazily,
/// once, during that domain's step and dropped afterwards.
struct DomainData {
  DomainSpec spec;
  std::function<Dataset()> load_train;
  std::shared_ptr<const Dataset> val;
};

/// Shorthand for in-memory datasets.
DomainData in_memory_domain(Dataset train, Dataset val);

/// Snapshot of the previous model plus the step index it belongs to.
struct StepContext {
  int t = 0;
  std::optional<Snapshot> teacher;
  std::set<std::string> transient_frozen;  // shared names frozen for this step only
};

/// Takes the snapshot, registers the domain and freezes every parameter of
/// domains i < t. Shared parameters stay trainable unless freeze_shared.
StepContext begin_step(Model& model, const DomainSpec& spec, const TrainConfig& cfg, Rng& rng);
/// Undoes the step-local freezing of shared parameters.
void end_step(Model& model, StepContext& ctx);

/// Task loss on domain t plus distillation through each previous domain's
/// own path (infer-mode BN for student and teacher).
LossBundle compute_losses(Model& model, const Snapshot* teacher, const Batch& batch, int t,
                          const TrainConfig& cfg);

/// Optimizer groups for step t: "shared" at lr / dlr (lr at step 1, 0 with
/// freeze_shared) and "domain" at lr; frozen parameters are left out.
std::vector<ParamGroup> step_param_groups(const Model& model, int t, const TrainConfig& cfg);

/// One pass over the shuffled dataset. The shuffle depends on (seed, t, epoch).
EpochLoss train_epoch(Model& model, Sgd& opt, const Snapshot* teacher, const Dataset& ds, int t,
                      int epoch, const TrainConfig& cfg);

struct SequenceResult {
  Model model;
  std::vector<StepReport> reports;
};

using StepCallback = std::function<void(const Model&, const StepReport&)>;

/// Shared weights only, no domain registered yet; the same for every method
/// using `mcfg` and the same seed.
Model initial_model(const ModelConfig& mcfg, const TrainConfig& cfg);

/// Trains domains[start.reports.size()..] on top of `start`. Step t uses RNG
/// streams keyed only by (seed, t), so resuming from a stored step-1 model is
/// bitwise equal to running the whole sequence.
SequenceResult resume_sequence(SequenceResult start, std::span<const DomainData> domains,
                               const TrainConfig& cfg, const StepCallback& on_step = {});

SequenceResult run_sequence(const ModelConfig& mcfg, std::span<const DomainData> domains,
                            const TrainConfig& cfg, const StepCallback& on_step = {});

/// Evaluates every registered domain on its validation set.
std::vector<DomainEval> evaluate_domains(Model& model, std::span<const DomainData> domains);

}  // namespace mdil
