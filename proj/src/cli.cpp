#include <CLI11.hpp>

#include <iostream>

#include "mdil/commands.hpp"
#include "mdil/error.hpp"

namespace mdil {

int cli_main(int argc, char** argv) {
  CLI::App app{"Multi-domain incremental segmentation lab"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::string baseline, out_dir;

  auto* gen = app.add_subcommand("gen-domains", "Generate the synthetic datasets of a config");
  gen->add_option("--config", config_path, "Experiment config")->required();
  gen->add_option("--out", out_dir, "Output directory (overrides `out`)");

  auto* run = app.add_subcommand("run", "Train a method over the configured sequence");
  run->add_option("--config", config_path, "Experiment config")->required();
  run->add_option("--baseline", baseline, "Baseline kind (overrides `method`)");
  run->add_option("--out", out_dir, "Output directory (overrides `out`)");

  std::string checkpoint, data_dir, domain;
  auto* eval = app.add_subcommand("eval", "Validation mIoU of one domain of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset root")->required();
  eval->add_option("--domain", domain, "Domain name")->required();

  std::string csv;
  auto* report = app.add_subcommand("report", "Render the table of a report.csv");
  report->add_option("csv", csv, "report.csv of a run")->required();

  SelftestOptions st;
  auto* selftest = app.add_subcommand("selftest", "Gradient, isolation, metric and checkpoint checks");
  selftest->add_flag("--inject-fault", st.inject_fault, "Perturb analytic gradients (test hook)");
  selftest->add_option("--grad-seeds", st.grad_seeds, "Random problems per gradient check")->check(CLI::PositiveNumber);

  std::size_t index = 0;
  std::string latent_out;
  auto* latents = app.add_subcommand("latents", "Export encoder features of one validation image");
  latents->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  latents->add_option("--data", data_dir, "Dataset root")->required();
  latents->add_option("--domain", domain, "Domain name")->required();
  latents->add_option("--index", index, "Validation sample index");
  latents->add_option("--out", latent_out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!baseline.empty()) overrides.baseline = baseline;
    if (!out_dir.empty()) overrides.out = out_dir;
    if (gen->parsed() || run->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, overrides);
      if (gen->parsed()) {
        cmd_gen_domains(cfg, std::cout);
      } else {
        cmd_run(cfg, std::cout);
      }
    } else if (eval->parsed()) {
      std::cout << render_eval(cmd_eval(checkpoint, data_dir, domain));
    } else if (report->parsed()) {
      std::cout << cmd_report(csv);
    } else if (selftest->parsed()) {
      const auto lines = cmd_selftest(st, std::cout);
      for (const auto& l : lines) {
        if (!l.pass) return kExitCheck;
      }
    } else if (latents->parsed()) {
      cmd_latents(checkpoint, data_dir, domain, index, latent_out);
      std::cout << "wrote " << latent_out << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace mdil
