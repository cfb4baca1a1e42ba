#include "mdil/commands.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mdil/checkpoint.hpp"
#include "mdil/error.hpp"
#include "mdil/gradcheck.hpp"

namespace mdil {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());
}

DomainData disk_domain(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path root = cfg.data_root();
  const LabelSpace labels = load_label_space(root, name);
  if (!(labels == cfg.spec(name).classes)) {
    throw DataError("dataset of domain '" + name + "' under '" + root.string() +
                    "' has a different label space than the config");
  }
  DomainData d;
  d.spec = DomainSpec{name, labels, "domain_" + name};
  d.load_train = [root, name] { return load_dataset(root, name, Split::train); };
  d.val = std::make_shared<const Dataset>(load_dataset(root, name, Split::val));
  return d;
}

std::vector<std::string> effective_echo(const MethodSetup& s) {
  std::vector<std::string> out;
  auto on = [](bool b) { return std::string(b ? "on" : "off"); };
  out.push_back("effective model.adapters = " + on(s.model.adapters));
  out.push_back("effective model.domain_bn = " + on(s.model.domain_bn));
  out.push_back("effective model.single_head = " + on(s.model.single_head));
  for (const auto& l : s.train.echo()) out.push_back("effective " + l);
  return out;
}

MethodRow row_from(const std::string& method, const StepReport& r) {
  MethodRow row{method, r.step, {}, std::nullopt};
  for (const auto& e : r.evals) row.scores.push_back({e.domain, e.miou, std::nullopt});
  return row;
}

void log_step(std::ostream& log, const std::string& method, const StepReport& r) {
  log << method << " step " << r.step << " (" << r.domain << "): " << r.epochs.size() << " epochs";
  if (!r.epochs.empty()) log << ", final l_ce " << fixed(r.epochs.back().ce, 4);
  log << ", " << fixed(r.wall_seconds, 1) << " s\n";
  for (const auto& e : r.evals) log << "  mIoU " << e.domain << " = " << fixed(e.miou) << '\n';
}

std::string steps_csv(const std::vector<std::string>& echo, const std::vector<StepReport>& steps) {
  std::ostringstream out;
  for (const auto& e : echo) out << "# " << e << '\n';
  out << "step,domain,epoch,l_ce,l_kld,l_ws\n";
  for (const auto& s : steps) {
    for (std::size_t e = 0; e < s.epochs.size(); ++e) {
      const auto& l = s.epochs[e];
      out << s.step << ',' << s.domain << ',' << e + 1 << ',' << fixed(l.ce, 6) << ',' << fixed(l.kld, 6)
          << ',' << fixed(l.ws, 6) << '\n';
    }
  }
  return out.str();
}

}  // namespace

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  auto set_entry = [&](const std::string& key, const std::string& value) {
    for (auto& [k, v] : cfg.entries) {
      if (k == key) {
        v = value;
        return;
      }
    }
    cfg.entries.emplace_back(key, value);
  };
  if (o.baseline) {
    if (!parse_baseline(*o.baseline)) throw ConfigError("--baseline: unknown baseline '" + *o.baseline + "'");
    cfg.method = *o.baseline;
    set_entry("method", *o.baseline);
  }
  if (o.out) {
    cfg.out = *o.out;
    set_entry("out", o.out->string());
  }
}

std::vector<fs::path> cmd_gen_domains(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path root = cfg.data_root();
  ensure_dir(root);
  std::vector<fs::path> dirs;
  for (const auto& name : cfg.domains) {
    const auto& spec = cfg.spec(name);
    for (Split split : {Split::train, Split::val}) {
      write_dataset(generate_domain(spec, split), root, name);
    }
    dirs.push_back(domain_dir(root, name));
    log << "domain " << name << ": " << spec.train_count << " train / " << spec.val_count << " val -> "
        << dirs.back().string() << '\n';
  }
  return dirs;
}

RunOutput cmd_run(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.sequence.empty()) throw ConfigError("sequence: missing key");
  const MethodSetup setup = cfg.setup();
  std::vector<DomainData> domains;
  for (const auto& name : cfg.sequence) domains.push_back(disk_domain(cfg, name));
  ensure_dir(cfg.out);

  RunOutput out;
  out.report.echo = cfg.echo();
  for (const auto& l : effective_echo(setup)) out.report.echo.push_back(l);

  const bool single = cfg.method == "single_task";
  if (cfg.reference || single) {
    MethodRow ref{"single_task", 1, {}, std::nullopt};
    const fs::path dir = single ? cfg.out : cfg.out / "reference";
    ensure_dir(dir);
    for (const auto& d : domains) {
      const auto res = run_baseline(BaselineKind::single_task, std::span<const DomainData>(&d, 1), cfg.model,
                                    cfg.train, [&](const Model& m, const StepReport& r) {
                                      const fs::path p = dir / ("single_task_" + d.spec.name + ".mdil");
                                      save_checkpoint(m, p);
                                      if (single) out.checkpoints.push_back(p);
                                      log_step(log, "single_task", r);
                                    });
      const auto& r = res.run.reports.front();
      ref.scores.push_back({d.spec.name, r.eval_of(d.spec.name).miou, std::nullopt});
      if (single) out.steps.push_back(r);
    }
    out.reference = ref;
  }

  if (single) {
    out.report.rows.push_back(*out.reference);
  } else {
    if (out.reference) out.report.rows.push_back(*out.reference);
    auto on_step = [&](const Model& m, const StepReport& r) {
      const fs::path p = cfg.out / ("step_" + std::to_string(r.step) + ".mdil");
      save_checkpoint(m, p);
      out.checkpoints.push_back(p);
      log_step(log, cfg.method, r);
    };
    std::vector<StepReport> steps;
    if (cfg.method == "ours") {
      steps = run_sequence(setup.model, domains, setup.train, on_step).reports;
    } else {
      const auto kind = *parse_baseline(cfg.method);
      auto res = run_baseline(kind, domains, cfg.model, cfg.train, on_step);
      if (res.violates_incremental) {
        out.report.echo.push_back("note: " + cfg.method + " reads every domain at once (not incremental)");
      }
      steps = std::move(res.run.reports);
    }
    for (const auto& s : steps) out.report.rows.push_back(row_from(cfg.method, s));
    out.steps = std::move(steps);
  }
  if (out.reference) apply_reference(out.report, *out.reference);

  write_text(cfg.out / "report.txt", render_table(out.report));
  write_text(cfg.out / "report.csv", render_csv(out.report));
  write_text(cfg.out / "steps.csv", steps_csv(out.report.echo, out.steps));
  log << '\n' << render_table(Report{{}, out.report.rows});
  return out;
}

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& data_root, const std::string& domain) {
  Model model = load_checkpoint(checkpoint);
  if (!model.has_domain(domain)) {
    std::string have;
    for (const auto& d : model.domains()) have += (have.empty() ? "" : ", ") + d.name;
    throw DataError("checkpoint '" + checkpoint.string() + "' has no domain '" + domain + "' (has: " + have + ")");
  }
  const int t = model.domain_index(domain);
  const Dataset val = load_dataset(data_root, domain, Split::val);
  if (!(val.labels == model.domain(t).labels)) {
    throw DataError("dataset of domain '" + domain + "' does not match the checkpoint's label space");
  }
  EvalReport r;
  r.domain = domain;
  r.labels = val.labels;
  r.cm = evaluate(model, val, t);
  r.iou = miou(r.cm);
  return r;
}

std::string render_eval(const EvalReport& r) {
  std::ostringstream out;
  out << "domain " << r.domain << ": mIoU " << fixed(100.0 * r.iou.miou) << '\n';
  for (std::size_t c = 0; c < r.iou.per_class.size(); ++c) {
    out << "  " << r.labels.name(c) << ' '
        << (r.iou.per_class[c] ? fixed(100.0 * *r.iou.per_class[c]) : std::string("-")) << '\n';
  }
  return out.str();
}

std::string cmd_report(const fs::path& csv) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot read '" + csv.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return render_table(parse_csv(ss.str()));
}

void cmd_latents(const fs::path& checkpoint, const fs::path& data_root, const std::string& domain,
                 std::size_t index, const fs::path& out) {
  Model model = load_checkpoint(checkpoint);
  if (!model.has_domain(domain)) throw DataError("checkpoint has no domain '" + domain + "'");
  const Dataset val = load_dataset(data_root, domain, Split::val);
  if (index >= val.size()) {
    throw DataError("index " + std::to_string(index) + " out of range (" + std::to_string(val.size()) + " samples)");
  }
  export_latents(model, val.samples[index], val.height, val.width, model.domain_index(domain), out);
}

// ---------------------------------------------------------------------------
// selftest

namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.encoder.widths = {4, 8};
  m.encoder.units_per_stage = 1;
  m.decoder_widths = {4, 4};
  return m;
}

Tensor probe_input(std::uint64_t seed) {
  Rng rng(seed, 5);
  std::vector<float> v(2 * 3 * 16 * 16);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Tensor::from({2, 3, 16, 16}, std::move(v));
}

LabelSpace tiny_labels() { return LabelSpace({"background", "rectangle", "disk"}); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data();
  const auto y = b.data();
  return std::equal(x.begin(), x.end(), y.begin(), y.end(),
                    [](float p, float q) { return std::memcmp(&p, &q, sizeof p) == 0; });
}

CheckLine check_isolation() {
  Rng rng(3, 0);
  Model m(tiny_model(), rng);
  m.add_domain({"A", tiny_labels(), ""}, InitMode::random, rng);
  m.add_domain({"B", tiny_labels(), ""}, InitMode::init_wt, rng);
  const Tensor x = probe_input(1);
  NoGradGuard guard;
  const Tensor a0 = m.forward(x, 1, BnMode::infer);
  const Tensor b0 = m.forward(x, 2, BnMode::infer);
  for (const auto& p : m.parameters()) {
    if (p.kind == GroupKind::shared || p.domain != 2) continue;
    Tensor handle = p.tensor;
    for (auto& v : handle.data()) v += 0.5f;
  }
  const bool a_same = bitwise_equal(a0, m.forward(x, 1, BnMode::infer));
  const bool b_changed = !bitwise_equal(b0, m.forward(x, 2, BnMode::infer));
  return {"isolation: domain-2 perturbation leaves domain 1", a_same && b_changed,
          a_same ? (b_changed ? "" : "domain-2 output did not move") : "domain-1 output changed"};
}

CheckLine check_add_domain() {
  Rng rng(4, 0);
  Model m(tiny_model(), rng);
  m.add_domain({"A", tiny_labels(), ""}, InitMode::random, rng);
  const Tensor x = probe_input(2);
  NoGradGuard guard;
  const Tensor before = m.forward(x, 1, BnMode::infer);
  m.add_domain({"B", tiny_labels(), ""}, InitMode::random, rng);
  const bool same = bitwise_equal(before, m.forward(x, 1, BnMode::infer));
  return {"isolation: add_domain keeps old outputs", same, same ? "" : "domain-1 output changed"};
}

CheckLine check_frozen_step() {
  DomainGenSpec spec = default_domain_specs()[0];
  spec.height = spec.width = 16;
  spec.train_count = 4;
  spec.val_count = 2;
  spec.shapes_min = spec.shapes_max = 1;
  const Dataset ds = generate_domain(spec, Split::train);
  TrainConfig cfg;
  cfg.batch_size = 2;
  Rng rng(5, 0);
  Model m(tiny_model(), rng);
  m.add_domain({"A", ds.labels, ""}, InitMode::random, rng);
  std::vector<std::pair<std::string, std::vector<float>>> old;
  StepContext ctx = begin_step(m, {"B", ds.labels, ""}, cfg, rng);
  for (const auto& p : m.parameters()) {
    if (p.kind != GroupKind::shared && p.domain == 1) old.emplace_back(p.name, p.tensor.vec());
  }
  Sgd opt(step_param_groups(m, 2, cfg), cfg.momentum);
  train_epoch(m, opt, &*ctx.teacher, ds, 2, 0, cfg);
  end_step(m, ctx);
  for (const auto& p : m.parameters()) {
    for (const auto& [name, v] : old) {
      if (name == p.name && p.tensor.vec() != v) return {"isolation: frozen parameters survive a step", false, name};
    }
  }
  return {"isolation: frozen parameters survive a step", true, std::to_string(old.size()) + " tensors"};
}

CheckLine check_metrics() {
  struct Vec {
    std::vector<double> model, base;
    double expect;
  };
  const Vec vecs[] = {
      {{40.05, 52.74}, {72.55, 54.1}, 23.66},
      {{65.21, 55.73}, {72.55, 54.1}, 3.55},
      {{30.49, 32.05, 60.65}, {72.55, 54.1, 61.97}, 33.62},
  };
  std::string detail;
  bool ok = true;
  for (const auto& v : vecs) {
    const double got = delta_m(v.model, v.base);
    ok = ok && std::fabs(got - v.expect) <= 0.01;
    detail += (detail.empty() ? "" : " ") + fixed(got);
  }
  ok = ok && std::fabs(forgetting_delta(72.55, 40.05) - -32.5) < 1e-9;
  ok = ok && std::fabs(forgetting_delta(54.1, 55.73) - 1.63) < 1e-9;
  return {"metrics: reference delta_m and forgetting vectors", ok, detail};
}

CheckLine check_checkpoint() {
  Rng rng(6, 0);
  Model m(tiny_model(), rng);
  m.add_domain({"A", tiny_labels(), ""}, InitMode::random, rng);
  m.add_domain({"B", tiny_labels(), ""}, InitMode::init_wt, rng);
  m.set_frozen(m.parameters().back().name, true);
  const fs::path path = fs::temp_directory_path() / ("mdil_selftest_" + std::to_string(::getpid()) + ".mdil");
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);
  std::error_code ec;
  fs::remove(path, ec);
  const auto a = m.state();
  const auto b = back.state();
  bool ok = a.size() == b.size() && m.frozen() == back.frozen();
  for (std::size_t i = 0; ok && i < a.size(); ++i) ok = a[i].name == b[i].name && bitwise_equal(a[i].tensor, b[i].tensor);
  const Tensor x = probe_input(3);
  NoGradGuard guard;
  ok = ok && bitwise_equal(m.forward(x, 2, BnMode::infer), back.forward(x, 2, BnMode::infer));
  return {"checkpoint: roundtrip is bit-exact", ok, std::to_string(a.size()) + " tensors"};
}

}  // namespace

std::vector<CheckLine> cmd_selftest(const SelftestOptions& opts, std::ostream& log) {
  std::vector<CheckLine> lines;
  auto emit = [&](CheckLine c) {
    log << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) log << " (" << c.detail << ")";
    log << '\n';
    log.flush();
    lines.push_back(std::move(c));
  };
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      emit(fn());
    } catch (const std::exception& e) {
      emit({name, false, std::string("threw: ") + e.what()});
    }
  };

  GradCheckOptions g;
  g.seeds = opts.grad_seeds;
  g.inject_fault = opts.inject_fault;
  for (GradOp op : all_grad_ops()) {
    const std::string name = "gradcheck " + grad_op_name(op);
    guarded(name, [&] {
      const auto r = check_gradients(op, g);
      char buf[96];
      std::snprintf(buf, sizeof buf, "max rel err %.2e over %d seeds", r.max_error, r.seeds);
      return CheckLine{name, r.pass, buf};
    });
  }
  guarded("isolation: domain-2 perturbation leaves domain 1", check_isolation);
  guarded("isolation: add_domain keeps old outputs", check_add_domain);
  guarded("isolation: frozen parameters survive a step", check_frozen_step);
  guarded("metrics: reference delta_m and forgetting vectors", check_metrics);
  guarded("checkpoint: roundtrip is bit-exact", check_checkpoint);
  return lines;
}

}  // namespace mdil
