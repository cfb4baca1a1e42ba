#include "mdil/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mdil/error.hpp"

namespace mdil {

namespace {

// RNG stream layout per step t: 1000 t for initialisation, 1000 t + 1 + e
// for the shuffle of epoch e.
constexpr std::uint64_t kStepStride = 1000;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train.lr must be positive");
  if (!freeze_shared && !(dlr >= 1)) throw ConfigError("train.dlr must be >= 1 or freeze-shared");
  if (!(lambda_kld >= 0)) throw ConfigError("train.lambda_kld must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (first_epochs < 1) throw ConfigError("train.first_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (first_batch_size < 1) throw ConfigError("train.first_batch_size must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must be in [0, 1)");
}

std::vector<std::string> TrainConfig::echo() const {
  return {
      "train.lr = " + num(lr),
      "train.dlr = " + (freeze_shared ? std::string("freeze-shared") : num(dlr)),
      "train.lambda_kld = " + num(lambda_kld),
      "train.kld = " + std::string(use_kld ? "on" : "off"),
      "train.distill = " + std::string(distill == DistillMode::all ? "all" : "last"),
      "train.init = " + std::string(init == InitMode::init_wt ? "init_wt" : "random"),
      "train.epochs = " + std::to_string(epochs),
      "train.first_epochs = " + std::to_string(first_epochs),
      "train.batch_size = " + std::to_string(batch_size),
      "train.first_batch_size = " + std::to_string(first_batch_size),
      "train.momentum = " + num(momentum),
      "train.schedule = " + std::string(schedule == LrSchedule::poly ? "poly" : "constant"),
      "train.seed = " + std::to_string(seed),
  };
}

const DomainEval& StepReport::eval_of(const std::string& name) const {
  for (const auto& e : evals) {
    if (e.domain == name) return e;
  }
  throw Error("step " + std::to_string(step) + " has no evaluation for domain '" + name + "'");
}

DomainData in_memory_domain(Dataset train, Dataset val) {
  if (train.domain != val.domain) throw Error("train and val splits belong to different domains");
  DomainData d;
  d.spec = {train.domain, train.labels, "memory"};
  auto shared = std::make_shared<const Dataset>(std::move(train));
  d.load_train = [shared] { return *shared; };
  d.val = std::make_shared<const Dataset>(std::move(val));
  return d;
}

StepContext begin_step(Model& model, const DomainSpec& spec, const TrainConfig& cfg, Rng& rng) {
  if (model.has_domain(spec.name)) throw Error("domain '" + spec.name + "' is already registered");
  StepContext ctx;
  ctx.t = model.num_domains() + 1;
  if (ctx.t > 1) ctx.teacher.emplace(model);
  model.add_domain(spec, cfg.init, rng);
  for (const auto& p : model.parameters()) {
    if (p.kind != GroupKind::shared && p.domain < ctx.t) model.set_frozen(p.name, true);
  }
  if (ctx.t > 1 && cfg.freeze_shared) {
    for (const auto& p : model.parameters()) {
      if (p.kind == GroupKind::shared && !model.is_frozen(p.name)) {
        ctx.transient_frozen.insert(p.name);
        model.set_frozen(p.name, true);
      }
    }
  }
  return ctx;
}

void end_step(Model& model, StepContext& ctx) {
  for (const auto& name : ctx.transient_frozen) model.set_frozen(name, false);
  ctx.transient_frozen.clear();
}

LossBundle compute_losses(Model& model, const Snapshot* teacher, const Batch& batch, int t,
                          const TrainConfig& cfg) {
  LossBundle out;
  const Tensor logits = model.forward(batch.images, t, BnMode::train);

  if (model.config().single_head) {
    const auto channels = model.class_channels(t);
    std::vector<std::uint8_t> remapped(batch.labels);
    for (auto& l : remapped) {
      if (l == kIgnoreLabel) continue;
      if (l >= channels.size()) throw DataError("label " + std::to_string(l) + " outside domain label space");
      l = channels[l];
    }
    out.l_ce = cross_entropy(logits, std::span<const std::uint8_t>(remapped)).loss;
  } else {
    out.l_ce = cross_entropy(logits, std::span<const std::uint8_t>(batch.labels)).loss;
  }

  const bool distill = t > 1 && cfg.use_kld && cfg.lambda_kld > 0;
  if (!distill) {
    out.l_kld = Tensor::scalar(0.0f);
    out.l_ws = out.l_ce;
    return out;
  }
  if (!teacher) throw Error("distillation at step " + std::to_string(t) + " needs a snapshot");
  Tensor sum;
  const int first = cfg.distill == DistillMode::all ? 1 : t - 1;
  for (int i = first; i < t; ++i) {
    const Tensor q_t = teacher->forward(batch.images, i);
    const Tensor q_s = model.forward(batch.images, i, BnMode::infer);
    const Tensor kl = kl_div(q_s, q_t);
    sum = sum.defined() ? add(sum, kl) : kl;
  }
  out.l_kld = scale(sum, static_cast<float>(cfg.lambda_kld));
  out.l_ws = add(out.l_ce, out.l_kld);
  return out;
}

std::vector<ParamGroup> step_param_groups(const Model& model, int t, const TrainConfig& cfg) {
  ParamGroup shared{"shared", {}, t > 1 ? cfg.lr / cfg.dlr : cfg.lr};
  ParamGroup domain{"domain", {}, cfg.lr};
  if (t > 1 && cfg.freeze_shared) shared.lr = 0.0;
  for (const auto& p : model.parameters()) {
    if (model.is_frozen(p.name)) continue;
    if (p.kind == GroupKind::shared) {
      shared.params.push_back({p.name, p.tensor});
    } else if (p.domain == t) {
      domain.params.push_back({p.name, p.tensor});
    } else {
      throw Error("parameter '" + p.name + "' of another domain is trainable at step " + std::to_string(t));
    }
  }
  std::vector<ParamGroup> groups;
  if (!shared.params.empty()) groups.push_back(std::move(shared));
  if (!domain.params.empty()) groups.push_back(std::move(domain));
  return groups;
}

EpochLoss train_epoch(Model& model, Sgd& opt, const Snapshot* teacher, const Dataset& ds, int t,
                      int epoch, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw Error("train_epoch: empty dataset for domain '" + ds.domain + "'");
  std::vector<std::size_t> order(ds.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed, kStepStride * static_cast<std::uint64_t>(t) + 1 + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }

  EpochLoss total;
  std::size_t batches = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_for(t));
  const std::size_t per_epoch = (order.size() + bs - 1) / bs;
  const double step_iters = static_cast<double>(per_epoch) * cfg.epochs_for(t);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    if (cfg.schedule == LrSchedule::poly) {
      const double i = static_cast<double>(static_cast<std::size_t>(epoch) * per_epoch + batches);
      opt.set_lr_scale(std::pow(std::max(0.0, 1.0 - i / step_iters), 0.9));
    }
    const std::size_t end = std::min(order.size(), start + bs);
    const Batch batch = make_batch(ds, std::span<const std::size_t>(order.data() + start, end - start));
    LossBundle losses = compute_losses(model, teacher, batch, t, cfg);
    total.ce += losses.l_ce.item();
    total.kld += losses.l_kld.item();
    total.ws += losses.l_ws.item();
    ++batches;
    backward(losses.l_ws);
    opt.step();
  }
  total.ce /= static_cast<double>(batches);
  total.kld /= static_cast<double>(batches);
  total.ws /= static_cast<double>(batches);
  return total;
}

Model initial_model(const ModelConfig& mcfg, const TrainConfig& cfg) {
  Rng rng(cfg.seed, 0);
  return Model(mcfg, rng);
}

std::vector<DomainEval> evaluate_domains(Model& model, std::span<const DomainData> domains) {
  std::vector<DomainEval> out;
  for (const auto& spec : model.domains()) {
    const DomainData* data = nullptr;
    for (const auto& d : domains) {
      if (d.spec.name == spec.name) data = &d;
    }
    if (!data || !data->val) throw Error("no validation data for domain '" + spec.name + "'");
    const int t = model.domain_index(spec.name);
    DomainEval e{spec.name, evaluate(model, *data->val, t), 0};
    e.miou = 100.0 * miou(e.cm).miou;
    out.push_back(std::move(e));
  }
  return out;
}

SequenceResult resume_sequence(SequenceResult state, std::span<const DomainData> domains,
                               const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (domains[i].spec.name == domains[j].spec.name) {
        throw Error("domain '" + domains[i].spec.name + "' appears twice in the sequence");
      }
    }
  }
  if (state.reports.size() != static_cast<std::size_t>(state.model.num_domains())) {
    throw Error("resume_sequence: model and report history disagree");
  }
  for (std::size_t s = 0; s < state.reports.size(); ++s) {
    if (s >= domains.size() || state.model.domain(static_cast<int>(s + 1)).name != domains[s].spec.name) {
      throw Error("resume_sequence: stored model does not match the domain sequence");
    }
  }

  for (std::size_t s = state.reports.size(); s < domains.size(); ++s) {
    const auto started = std::chrono::steady_clock::now();
    const auto& d = domains[s];
    const int t = static_cast<int>(s + 1);
    Rng init_rng(cfg.seed, kStepStride * static_cast<std::uint64_t>(t));
    StepContext ctx = begin_step(state.model, d.spec, cfg, init_rng);

    StepReport report;
    report.step = t;
    report.domain = d.spec.name;
    report.echo = cfg.echo();
    {
      // Training data lives only for the duration of its own step.
      const Dataset train = d.load_train();
      if (!(train.labels == d.spec.labels)) {
        throw DataError("training data of '" + d.spec.name + "' has a different label space");
      }
      Sgd opt(step_param_groups(state.model, t, cfg), cfg.momentum);
      const Snapshot* teacher = ctx.teacher ? &*ctx.teacher : nullptr;
      for (int e = 0; e < cfg.epochs_for(t); ++e) {
        report.epochs.push_back(train_epoch(state.model, opt, teacher, train, t, e, cfg));
      }
    }
    end_step(state.model, ctx);
    report.evals = evaluate_domains(state.model, domains);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_step) on_step(state.model, report);
    state.reports.push_back(std::move(report));
  }
  return state;
}

SequenceResult run_sequence(const ModelConfig& mcfg, std::span<const DomainData> domains,
                            const TrainConfig& cfg, const StepCallback& on_step) {
  if (domains.empty()) throw Error("run_sequence: empty domain sequence");
  return resume_sequence(SequenceResult{initial_model(mcfg, cfg), {}}, domains, cfg, on_step);
}

}  // namespace mdil
