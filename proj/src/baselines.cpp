#include "mdil/baselines.hpp"

#include <chrono>
#include <numeric>

#include "mdil/error.hpp"

namespace mdil {

const std::vector<BaselineKind>& all_baselines() {
  static const std::vector<BaselineKind> kinds{
      BaselineKind::single_task,     BaselineKind::joint_multitask, BaselineKind::ft_multihead,
      BaselineKind::ft_singlehead,   BaselineKind::feature_extract, BaselineKind::lwf_multihead,
      BaselineKind::dau_ft,          BaselineKind::dau_ft_dlr1,     BaselineKind::dau_ft_rinit,
      BaselineKind::dau_ft_dlr,
  };
  return kinds;
}

std::string baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::single_task: return "single_task";
    case BaselineKind::joint_multitask: return "joint_multitask";
    case BaselineKind::ft_multihead: return "ft_multihead";
    case BaselineKind::ft_singlehead: return "ft_singlehead";
    case BaselineKind::feature_extract: return "feature_extract";
    case BaselineKind::lwf_multihead: return "lwf_multihead";
    case BaselineKind::dau_ft: return "dau_ft";
    case BaselineKind::dau_ft_dlr1: return "dau_ft_dlr1";
    case BaselineKind::dau_ft_rinit: return "dau_ft_rinit";
    case BaselineKind::dau_ft_dlr: return "dau_ft_dlr";
  }
  throw Error("unknown baseline kind");
}

std::optional<BaselineKind> parse_baseline(const std::string& name) {
  for (auto k : all_baselines()) {
    if (baseline_name(k) == name) return k;
  }
  return std::nullopt;
}

MethodFlags method_flags(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::lwf_multihead: return {true, false, false, false};
    case BaselineKind::dau_ft: return {false, false, false, true};
    case BaselineKind::dau_ft_dlr1: return {false, false, true, true};
    case BaselineKind::dau_ft_rinit: return {false, true, false, true};
    case BaselineKind::dau_ft_dlr: return {false, true, true, true};
    default: return {};
  }
}

namespace {

MethodSetup setup_from_flags(const MethodFlags& f, const ModelConfig& model, const TrainConfig& base) {
  MethodSetup s{model, base};
  s.model.adapters = f.dau;
  s.model.domain_bn = f.dau;
  s.model.single_head = false;
  s.train.use_kld = f.kld;
  s.train.init = f.init_wt ? InitMode::init_wt : InitMode::random;
  s.train.freeze_shared = false;
  s.train.dlr = f.dlr ? kAblationDlr : 1.0;
  return s;
}

}  // namespace

MethodSetup baseline_setup(BaselineKind kind, const ModelConfig& model, const TrainConfig& base) {
  MethodSetup s = setup_from_flags(method_flags(kind), model, base);
  if (kind == BaselineKind::ft_singlehead) s.model.single_head = true;
  if (kind == BaselineKind::feature_extract) s.train.freeze_shared = true;
  return s;
}

MethodSetup ours_setup(const ModelConfig& model, const TrainConfig& base) {
  MethodSetup s = setup_from_flags(ours_flags(), model, base);
  // Keep the configured ratio (or freeze-shared) for the full method.
  s.train.dlr = base.dlr;
  s.train.freeze_shared = base.freeze_shared;
  return s;
}

std::vector<std::uint8_t> remap_labels(std::span<const std::uint8_t> labels, const LabelSpace& from,
                                       const UnionLabelSpace& to, const std::string& domain) {
  const auto& table = to.table(domain);
  if (table.size() != from.size()) throw Error("remap_labels: label space of '" + domain + "' does not match");
  std::vector<std::uint8_t> out(labels.begin(), labels.end());
  for (auto& l : out) {
    if (l == kIgnoreLabel) continue;
    if (l >= table.size()) throw Error("remap_labels: label " + std::to_string(l) + " out of range");
    l = table[l];
  }
  return out;
}

std::vector<std::uint8_t> unmap_labels(std::span<const std::uint8_t> labels, const LabelSpace& from,
                                       const UnionLabelSpace& to, const std::string& domain) {
  const auto& table = to.table(domain);
  if (table.size() != from.size()) throw Error("unmap_labels: label space of '" + domain + "' does not match");
  std::vector<std::uint8_t> inverse(to.size(), kIgnoreLabel);
  for (std::size_t i = 0; i < table.size(); ++i) inverse[table[i]] = static_cast<std::uint8_t>(i);
  std::vector<std::uint8_t> out(labels.begin(), labels.end());
  for (auto& l : out) {
    if (l == kIgnoreLabel) continue;
    if (l >= inverse.size() || inverse[l] == kIgnoreLabel) {
      throw Error("unmap_labels: global label " + std::to_string(l) + " not in '" + domain + "'");
    }
    l = inverse[l];
  }
  return out;
}

SequenceResult run_joint(const ModelConfig& mcfg, std::span<const DomainData> domains,
                         const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (domains.empty()) throw Error("joint training needs at least one domain");
  const auto started = std::chrono::steady_clock::now();
  Model model = initial_model(mcfg, cfg);
  Rng init_rng(cfg.seed, 1000);
  for (const auto& d : domains) model.add_domain(d.spec, InitMode::random, init_rng);

  std::vector<Dataset> train;
  for (const auto& d : domains) train.push_back(d.load_train());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].samples.empty()) throw Error("joint: empty dataset for '" + domains[i].spec.name + "'");
  }

  TrainConfig step_cfg = cfg;
  step_cfg.use_kld = false;
  // Every head trains at once, so one group at the base rate.
  ParamGroup all{"joint", {}, cfg.lr};
  for (const auto& p : model.parameters()) all.params.push_back({p.name, p.tensor});
  Sgd opt({std::move(all)}, cfg.momentum);
  const auto bs = static_cast<std::size_t>(cfg.batch_for(1));

  StepReport report;
  report.step = 1;
  report.domain = "joint";
  report.echo = cfg.echo();
  for (int e = 0; e < cfg.first_epochs; ++e) {
    std::vector<std::vector<std::size_t>> orders;
    std::size_t iters = 0;
    for (std::size_t d = 0; d < train.size(); ++d) {
      std::vector<std::size_t> order(train[d].samples.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(cfg.seed, 500000 + 64 * static_cast<std::uint64_t>(e) + d);
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      iters = std::max(iters, (order.size() + bs - 1) / bs);
      orders.push_back(std::move(order));
    }
    EpochLoss loss;
    for (std::size_t it = 0; it < iters; ++it) {
      Tensor total;
      for (std::size_t d = 0; d < train.size(); ++d) {
        // Smaller datasets wrap around.
        const auto& order = orders[d];
        const std::size_t nb = (order.size() + bs - 1) / bs;
        const std::size_t start = (it % nb) * bs;
        const std::size_t end = std::min(order.size(), start + bs);
        const Batch b = make_batch(train[d], std::span<const std::size_t>(order.data() + start, end - start));
        const LossBundle l = compute_losses(model, nullptr, b, static_cast<int>(d + 1), step_cfg);
        total = total.defined() ? add(total, l.l_ce) : l.l_ce;
      }
      loss.ce += total.item();
      backward(total);
      opt.step();
    }
    loss.ce /= static_cast<double>(iters);
    loss.ws = loss.ce;
    report.epochs.push_back(loss);
  }
  report.evals = evaluate_domains(model, domains);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (on_step) on_step(model, report);
  SequenceResult out{std::move(model), {}};
  out.reports.push_back(std::move(report));
  return out;
}

BaselineResult run_baseline(BaselineKind kind, std::span<const DomainData> domains,
                            const ModelConfig& model, const TrainConfig& base, const StepCallback& on_step) {
  if (domains.empty()) throw Error(baseline_name(kind) + ": no domains");
  if (kind == BaselineKind::single_task && domains.size() != 1) {
    throw Error("single_task takes exactly one domain, got " + std::to_string(domains.size()));
  }
  const MethodSetup s = baseline_setup(kind, model, base);
  if (kind == BaselineKind::joint_multitask) {
    BaselineResult r{run_joint(s.model, domains, s.train, on_step), static_cast<int>(domains.size()), true};
    r.violates_incremental = domains.size() > 1;
    return r;
  }
  return BaselineResult{run_sequence(s.model, domains, s.train, on_step), 1, false};
}

}  // namespace mdil
