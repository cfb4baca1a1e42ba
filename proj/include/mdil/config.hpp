#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdil/baselines.hpp"
#include "mdil/synth.hpp"
#include "mdil/trainer.hpp"

namespace mdil {

/// Parsed experiment file. Format: one `key = value` per line, `#` starts a
/// comment, blank lines ignored. Recognised keys:
///
///   out, data                      output and dataset directories
///   domains                        domains to generate (default: sequence)
///   sequence                       training order, comma separated
///   method                         ours or a baseline kind
///   reference                      single_task | none  (delta reference)
///   train.lr, train.dlr (number or freeze-shared), train.lambda_kld,
///   train.kld (on|off), train.distill (all|last), train.init (init_wt|random),
///   train.epochs, train.first_epochs, train.batch_size, train.first_batch_size,
///   train.momentum, train.schedule (constant|poly), train.seed
///   model.widths, model.units, model.decoder_widths, model.tconv_kernel,
///   model.adapter_std, model.bn_momentum, model.bn_eps
///   domain.<name>.seed             required for every listed domain
///   domain.<name>.classes          required, comma separated, background first
///   domain.<name>.hue, .noise, .texture_freq, .texture_amp, .jitter,
///   domain.<name>.size, .train, .val, .shapes_min, .shapes_max, .min_visible,
///   domain.<name>.radius_min, .radius_max
struct ExperimentConfig {
  std::filesystem::path out = "run";
  std::filesystem::path data;  // default: <out>/data
  std::vector<std::string> domains;
  std::vector<std::string> sequence;
  std::string method = "ours";
  bool reference = true;
  TrainConfig train;
  ModelConfig model;
  std::map<std::string, DomainGenSpec> specs;
  /// Every key as given, for provenance.
  std::vector<std::pair<std::string, std::string>> entries;

  std::filesystem::path data_root() const { return data.empty() ? out / "data" : data; }
  const DomainGenSpec& spec(const std::string& name) const;
  /// "key = value" lines of every entry in file order.
  std::vector<std::string> echo() const;
  /// Model and training settings for `method`.
  MethodSetup setup() const;
};

/// Throws ConfigError naming the offending key or line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

bool is_method_name(const std::string& name);

}  // namespace mdil
