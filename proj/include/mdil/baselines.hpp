#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdil/trainer.hpp"

namespace mdil {

enum class BaselineKind {
  single_task,
  joint_multitask,
  ft_multihead,
  ft_singlehead,
  feature_extract,
  lwf_multihead,
  dau_ft,
  dau_ft_dlr1,
  dau_ft_rinit,
  dau_ft_dlr,
};

const std::vector<BaselineKind>& all_baselines();
std::string baseline_name(BaselineKind kind);
std::optional<BaselineKind> parse_baseline(const std::string& name);

/// Column pattern of the ablation grid.
struct MethodFlags {
  bool kld = false;      // distillation loss
  bool dlr = false;      // shared LR 100x lower than domain LR
  bool init_wt = false;  // new domain initialised from the previous one
  bool dau = false;      // adapters and DS-BN in the encoder
};

MethodFlags method_flags(BaselineKind kind);
/// Flags of the full method.
inline MethodFlags ours_flags() { return {true, true, true, true}; }

/// Network and training settings of a method, derived from the given base
/// settings. Encoder and decoder shapes, lr, epochs, batch size, momentum,
/// seed and lambda are kept; the flags decide the rest.
struct MethodSetup {
  ModelConfig model;
  TrainConfig train;
};
inline constexpr double kAblationDlr = 100.0;
MethodSetup baseline_setup(BaselineKind kind, const ModelConfig& model, const TrainConfig& base);
MethodSetup ours_setup(const ModelConfig& model, const TrainConfig& base);

/// Remaps local labels into the union space; ignore pixels pass through.
std::vector<std::uint8_t> remap_labels(std::span<const std::uint8_t> labels, const LabelSpace& from,
                                       const UnionLabelSpace& to, const std::string& domain);
/// Inverse of remap_labels for the same domain.
std::vector<std::uint8_t> unmap_labels(std::span<const std::uint8_t> labels, const LabelSpace& from,
                                       const UnionLabelSpace& to, const std::string& domain);

struct BaselineResult {
  SequenceResult run;
  /// Number of domains whose training data one step read; 1 except joint.
  int max_domains_per_step = 1;
  bool violates_incremental = false;
};

/// Runs one baseline over the sequence. single_task takes exactly one
/// domain; joint_multitask trains on every domain at once in one step.
BaselineResult run_baseline(BaselineKind kind, std::span<const DomainData> domains,
                            const ModelConfig& model, const TrainConfig& base,
                            const StepCallback& on_step = {});

/// Joint training on all domains together; one report covering all of them.
SequenceResult run_joint(const ModelConfig& mcfg, std::span<const DomainData> domains,
                         const TrainConfig& cfg, const StepCallback& on_step = {});

}  // namespace mdil
