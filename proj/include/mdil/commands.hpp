#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdil/config.hpp"
#include "mdil/eval.hpp"

namespace mdil {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitCheck = 3 };

/// Command-line overrides applied on top of a config file. Overrides are
/// echoed into the reports like any other key.
struct Overrides {
  std::optional<std::string> baseline;
  std::optional<std::filesystem::path> out;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Writes every configured domain under data_root(). Re-running rewrites the
/// same bytes.
std::vector<std::filesystem::path> cmd_gen_domains(const ExperimentConfig& cfg, std::ostream& log);

struct RunOutput {
  std::vector<StepReport> steps;
  std::optional<MethodRow> reference;  // single_task per domain
  Report report;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains `cfg.method` over the sequence and writes into cfg.out:
///   step_<t>.mdil    model after step t (joint: step_1 only)
///   report.txt       config echo plus the comparison table
///   report.csv       method,step,domain,miou,delta,delta_m
///   steps.csv        per-epoch losses of every step
/// With reference = single_task, one plain model per domain is trained first
/// and stored under reference/. Wall-clock times go to `log` only.
RunOutput cmd_run(const ExperimentConfig& cfg, std::ostream& log);

struct EvalReport {
  std::string domain;
  ConfusionMatrix cm;
  IouResult iou;
  LabelSpace labels;
};

/// Validation mIoU of one domain of a checkpoint. Throws DataError when the
/// checkpoint does not contain the domain.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                    const std::string& domain);
std::string render_eval(const EvalReport& r);

/// Re-renders the table of a report.csv.
std::string cmd_report(const std::filesystem::path& csv);

/// Encoder features of one validation image, see export_latents.
void cmd_latents(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                 const std::string& domain, std::size_t index, const std::filesystem::path& out);

struct SelftestOptions {
  bool inject_fault = false;
  int grad_seeds = 20;
};

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Gradient checks, routing isolation, metric vectors and checkpoint
/// roundtrip. Each check prints one PASS/FAIL line to `log`.
std::vector<CheckLine> cmd_selftest(const SelftestOptions& opts, std::ostream& log);

/// Entry point of the mdil tool; maps exceptions to exit codes.
int cli_main(int argc, char** argv);

}  // namespace mdil
