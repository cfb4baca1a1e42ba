#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mdil/dau.hpp"
#include "mdil/labels.hpp"
#include "mdil/optim.hpp"
#include "mdil/rng.hpp"

namespace mdil {

using BatchNorm = BatchNormLayer<float>;

/// Toy encoder: one stride-2 downsampler per stage, then `units_per_stage`
/// residual units at that width.
struct EncoderConfig {
  std::int64_t in_channels = 3;
  std::vector<std::int64_t> widths{16, 32};
  int units_per_stage = 2;
};

struct ModelConfig {
  EncoderConfig encoder;
  /// Output width of each decoder upsampling block, deepest first. There is
  /// one block per encoder stage so the logits come back at input resolution.
  std::vector<std::int64_t> decoder_widths{8, 8};
  int tconv_kernel = 2;
  /// DAU variant: per-domain parallel 1x1 adapters and per-domain BN.
  /// Both false gives the plain network used by the baselines.
  bool adapters = true;
  bool domain_bn = true;
  /// One classifier over the union of all label spaces instead of one
  /// decoder per domain.
  bool single_head = false;
  BnOptions bn;
  double adapter_init_std = 0.01;

  static ModelConfig dau() { return {}; }
  static ModelConfig plain() {
    ModelConfig c;
    c.adapters = false;
    c.domain_bn = false;
    return c;
  }

  void validate() const;
};

enum class GroupKind { shared, domain, decoder };

/// A parameter as seen by the registry: a handle onto the model's storage.
struct ParamRef {
  std::string name;
  Tensor tensor;
  GroupKind kind;
  int domain;  // 1-based owner for domain/decoder groups, 0 for shared
};

enum class InitMode {
  init_wt,  // copy adapters, BN and non-classifier decoder from domain t-1
  random,
};

/// Residual unit with shared 3x3 weights and one adapter/BN slot per domain
/// (or a single shared BN slot in the plain variant).
class DauUnit {
 public:
  struct Slot {
    Tensor aw1;
    Tensor aw2;
    BatchNorm bn1;
    BatchNorm bn2;
  };

  DauUnit() = default;
  DauUnit(std::int64_t channels, Rng& rng);

  std::int64_t channels() const { return w1.dim(0); }

  /// Adds a slot: random adapters (N(0, adapter_std)) and fresh BN, or a
  /// bitwise copy of `copy_from` when given.
  void add_slot(bool with_adapters, double adapter_std, Rng& rng, const Slot* copy_from = nullptr);

  Tensor forward(const Tensor& x, std::size_t slot, BnMode mode, const BnOptions& opts);

  /// Registry view. Slot s of a domain-specific unit belongs to domain s+1;
  /// with `shared_slots` the single slot is shared.
  void collect(const std::string& prefix, bool shared_slots, std::vector<ParamRef>& out) const;
  void collect_buffers(const std::string& prefix, bool shared_slots,
                       std::vector<NamedTensor>& out) const;

  DauUnit clone() const;

  Tensor w1;
  Tensor w2;
  std::vector<Slot> slots;
};

struct Downsampler {
  Tensor w;                    // [out, in, 3, 3], stride 2
  std::vector<BatchNorm> bn;   // one per domain, or one shared
};

struct UpBlock {
  Tensor w;  // [in, out, k, k] transposed conv
  BatchNorm bn;
};

struct DecoderHead {
  std::vector<UpBlock> ups;
  Tensor classifier;  // [classes, width, 1, 1]
};

struct ForwardOutput {
  Tensor features;  // last encoder stage
  Tensor logits;    // [N, classes, H, W]
};

/// Labelled partition of every parameter name.
struct ParamPartition {
  std::set<std::string> shared;
  std::map<int, std::set<std::string>> domain;  // domain t -> adapters, DS-BN, decoder
  std::set<std::string> frozen;

  std::size_t size() const;
};

/// Multi-domain segmentation network: shared encoder with domain-aware
/// residual units and one decoder head per domain.
///
/// Domains are addressed by their 1-based registration order t. A forward
/// pass along domain t reads only shared parameters and domain-t parameters.
class Model {
 public:
  Model(ModelConfig cfg, Rng& rng);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy of all parameters, statistics, registry and frozen set.
  Model clone() const;

  const ModelConfig& config() const { return cfg_; }
  int num_domains() const { return static_cast<int>(domains_.size()); }
  const std::vector<DomainSpec>& domains() const { return domains_; }
  const DomainSpec& domain(int t) const;
  int domain_index(const std::string& name) const;  // 1-based; throws if unknown
  bool has_domain(const std::string& name) const;

  /// Registers a new domain (adapter slot, DS-BN and decoder head).
  void add_domain(const DomainSpec& spec, InitMode init, Rng& rng);

  Tensor forward(const Tensor& x, int t, BnMode mode);
  /// Separate BN modes for encoder and head (feature extraction trains a
  /// head on top of an encoder running in infer mode).
  ForwardOutput forward_full(const Tensor& x, int t, BnMode encoder_mode, BnMode head_mode);
  Tensor encode(const Tensor& x, int t, BnMode mode);

  /// Head output channel for each local class of domain t (identity unless
  /// single-head).
  std::vector<std::uint8_t> class_channels(int t) const;
  /// Per-pixel local class prediction for domain t, infer mode, no graph.
  std::vector<std::uint8_t> predict(const Tensor& x, int t);

  std::vector<ParamRef> parameters() const;
  std::vector<NamedTensor> buffers() const;  // BN running statistics
  std::vector<NamedTensor> state() const;    // parameters then buffers

  void set_frozen(const std::string& name, bool frozen);
  void freeze_all();
  bool is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }
  const std::set<std::string>& frozen() const { return frozen_; }

  const UnionLabelSpace& union_labels() const { return union_; }

  // Structure, exposed for tests and the checkpoint writer.
  std::vector<Downsampler>& downsamplers() { return down_; }
  std::vector<std::vector<DauUnit>>& stages() { return stages_; }
  std::vector<DecoderHead>& heads() { return heads_; }

 private:
  Model() = default;
  std::size_t slot_of(int t) const;
  DecoderHead& head_of(int t);
  DecoderHead make_head(std::int64_t classes, Rng& rng) const;
  void check_domain(int t) const;
  void sync_trainability();

  ModelConfig cfg_;
  std::vector<Downsampler> down_;
  std::vector<std::vector<DauUnit>> stages_;
  std::vector<DecoderHead> heads_;
  std::vector<DomainSpec> domains_;
  UnionLabelSpace union_;
  std::set<std::string> frozen_;
};

/// Fresh model with one registered domain.
Model build_model(const ModelConfig& cfg, const DomainSpec& first_domain, Rng& rng);

ParamPartition param_partition(const Model& model);

std::int64_t parameter_count(const std::vector<ParamRef>& params);

/// Fraction of parameter scalars that are shared; running stats excluded.
double sharing_ratio(const std::vector<ParamRef>& params);
double sharing_ratio(const Model& model);

/// Frozen deep copy of a model; every forward pass runs in infer mode with
/// graph recording disabled.
class Snapshot {
 public:
  explicit Snapshot(const Model& model);

  Tensor forward(const Tensor& x, int t) const;
  Tensor encode(const Tensor& x, int t) const;
  const Model& model() const { return model_; }
  Snapshot clone() const { return Snapshot(model_); }

 private:
  mutable Model model_;
};

inline Snapshot snapshot(const Model& model) { return Snapshot(model); }

}  // namespace mdil
