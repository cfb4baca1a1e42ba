#include <gtest/gtest.h>

#include "mdil/baselines.hpp"
#include "mdil/error.hpp"
#include "mdil/trainer.hpp"
#include "test_util.hpp"

namespace mdil {
namespace {

using test::bitwise_equal;
using test::capture;

void expect_same_state(const Model& a, const Model& b) {
  const auto sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    ASSERT_EQ(sa[i].name, sb[i].name);
    EXPECT_TRUE(bitwise_equal(sa[i].tensor, sb[i].tensor)) << sa[i].name;
  }
}

void expect_same_reports(const std::vector<StepReport>& a, const std::vector<StepReport>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t s = 0; s < a.size(); ++s) {
    ASSERT_EQ(a[s].epochs.size(), b[s].epochs.size());
    for (std::size_t e = 0; e < a[s].epochs.size(); ++e) {
      EXPECT_EQ(a[s].epochs[e].ce, b[s].epochs[e].ce);
      EXPECT_EQ(a[s].epochs[e].kld, b[s].epochs[e].kld);
    }
    ASSERT_EQ(a[s].evals.size(), b[s].evals.size());
    for (std::size_t d = 0; d < a[s].evals.size(); ++d) EXPECT_EQ(a[s].evals[d].cm, b[s].evals[d].cm);
  }
}

/// Model trained one epoch on A, ready for a second domain.
struct TwoDomainFixture {
  std::vector<DomainData> domains{test::small_domain(0), test::small_domain(1)};
  TrainConfig cfg = test::quick_train();
  SequenceResult after_a = run_sequence(test::tiny_model(), std::span(domains).first(1), cfg);
};

TEST(BeginStep, FirstStepHasNoTeacherOrFrozenSet) {
  Model m = initial_model(test::tiny_model(), test::quick_train());
  Rng rng(1);
  StepContext ctx = begin_step(m, test::small_domain(0).spec, test::quick_train(), rng);
  EXPECT_EQ(ctx.t, 1);
  EXPECT_FALSE(ctx.teacher.has_value());
  EXPECT_TRUE(m.frozen().empty());
}

TEST(BeginStep, FreezesHistoryAndSnapshotsIt) {
  TwoDomainFixture f;
  Model& m = f.after_a.model;
  NoGradGuard guard;
  const Tensor x = test::random_input(3);
  const Tensor before = m.forward(x, 1, BnMode::infer);
  Rng rng(2);
  StepContext ctx = begin_step(m, f.domains[1].spec, f.cfg, rng);
  EXPECT_EQ(ctx.t, 2);
  ASSERT_TRUE(ctx.teacher.has_value());
  EXPECT_TRUE(bitwise_equal(ctx.teacher->forward(x, 1), m.forward(x, 1, BnMode::infer)));
  EXPECT_TRUE(bitwise_equal(before, ctx.teacher->forward(x, 1)));
  for (const auto& p : m.parameters()) {
    const bool old = p.kind != GroupKind::shared && p.domain == 1;
    EXPECT_EQ(m.is_frozen(p.name), old) << p.name;
  }
  EXPECT_THROW(begin_step(m, f.domains[1].spec, f.cfg, rng), Error);
}

TEST(Losses, FirstStepHasNoDistillation) {
  Model m = initial_model(test::tiny_model(), test::quick_train());
  Rng rng(1);
  const auto d = test::small_domain(0);
  begin_step(m, d.spec, test::quick_train(), rng);
  const Dataset train = d.load_train();
  const std::vector<std::size_t> idx{0, 1};
  const LossBundle l = compute_losses(m, nullptr, make_batch(train, idx), 1, test::quick_train());
  EXPECT_EQ(l.l_kld.item(), 0.0f);
  EXPECT_EQ(l.l_ws.item(), l.l_ce.item());
}

TEST(Losses, DistillationIsZeroRightAfterBeginStep) {
  TwoDomainFixture f;
  Rng rng(2);
  StepContext ctx = begin_step(f.after_a.model, f.domains[1].spec, f.cfg, rng);
  const Dataset train = f.domains[1].load_train();
  for (std::size_t i = 0; i + 2 <= train.size(); i += 2) {
    const std::vector<std::size_t> idx{i, i + 1};
    const LossBundle l = compute_losses(f.after_a.model, &*ctx.teacher, make_batch(train, idx), 2, f.cfg);
    EXPECT_LE(std::abs(l.l_kld.item()), 1e-6f);
    EXPECT_NEAR(l.l_ws.item(), l.l_ce.item() + l.l_kld.item(), 1e-6);
  }
}

TEST(Losses, DistillationHasNoGradientOnNewDomain) {
  TwoDomainFixture f;
  Rng rng(2);
  StepContext ctx = begin_step(f.after_a.model, f.domains[1].spec, f.cfg, rng);
  Model& m = f.after_a.model;
  // Move the shared weights so the distillation term is not trivially zero.
  for (const auto& p : m.parameters()) {
    if (p.kind != GroupKind::shared) continue;
    Tensor h = p.tensor;
    for (auto& v : h.data()) v *= 1.05f;
  }
  const Dataset train = f.domains[1].load_train();
  const std::vector<std::size_t> idx{0, 1, 2};
  const LossBundle l = compute_losses(m, &*ctx.teacher, make_batch(train, idx), 2, f.cfg);
  ASSERT_GT(l.l_kld.item(), 0.0f);
  backward(l.l_kld);
  bool shared_grad = false;
  for (const auto& p : m.parameters()) {
    if (p.kind == GroupKind::shared) {
      shared_grad |= p.tensor.has_grad();
      continue;
    }
    if (p.domain != 2 || !p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) ASSERT_EQ(g, 0.0f) << p.name;
  }
  EXPECT_TRUE(shared_grad);
}

TEST(ParamGroups, LearningRatesPerStep) {
  TwoDomainFixture f;
  f.cfg.lr = 0.02;
  f.cfg.dlr = 50;
  const auto g1 = step_param_groups(f.after_a.model, 1, f.cfg);
  for (const auto& g : g1) EXPECT_EQ(g.lr, 0.02) << g.label;
  Rng rng(2);
  begin_step(f.after_a.model, f.domains[1].spec, f.cfg, rng);
  const auto g2 = step_param_groups(f.after_a.model, 2, f.cfg);
  double shared_lr = -1, domain_lr = -1;
  std::size_t n = 0;
  for (const auto& g : g2) {
    if (g.label == "shared") shared_lr = g.lr;
    if (g.label == "domain") domain_lr = g.lr;
    for (const auto& p : g.params) {
      EXPECT_FALSE(f.after_a.model.is_frozen(p.name)) << p.name;
      ++n;
    }
  }
  EXPECT_EQ(domain_lr, 0.02);
  EXPECT_EQ(shared_lr, 0.02 / 50);
  EXPECT_EQ(domain_lr / shared_lr, 50.0);
  std::size_t trainable = 0;
  for (const auto& p : f.after_a.model.parameters()) trainable += f.after_a.model.is_frozen(p.name) ? 0 : 1;
  EXPECT_EQ(n, trainable);
}

TEST(TrainEpoch, FrozenHistoryIsBitwiseConstant) {
  TwoDomainFixture f;
  Model& m = f.after_a.model;
  Rng rng(2);
  StepContext ctx = begin_step(m, f.domains[1].spec, f.cfg, rng);
  const auto before = capture(m.state());
  const auto frozen = m.frozen();
  Sgd opt(step_param_groups(m, 2, f.cfg), f.cfg.momentum);
  const Dataset train = f.domains[1].load_train();
  for (int e = 0; e < 2; ++e) train_epoch(m, opt, &*ctx.teacher, train, 2, e, f.cfg);
  const auto after = capture(m.state());
  int changed = 0;
  for (const auto& [name, v] : before) {
    const bool old_domain = name.find("dom1") != std::string::npos;
    if (frozen.count(name) || old_domain) {
      EXPECT_EQ(v, after.at(name)) << name;
    } else {
      changed += v != after.at(name) ? 1 : 0;
    }
  }
  EXPECT_GT(changed, 0);
}

TEST(TrainEpoch, FreezeSharedKeepsSharedWeights) {
  TwoDomainFixture f;
  f.cfg.freeze_shared = true;
  Model& m = f.after_a.model;
  Rng rng(2);
  StepContext ctx = begin_step(m, f.domains[1].spec, f.cfg, rng);
  std::map<std::string, std::vector<float>> shared;
  for (const auto& p : m.parameters()) {
    if (p.kind == GroupKind::shared) shared[p.name].assign(p.tensor.data().begin(), p.tensor.data().end());
  }
  ASSERT_FALSE(shared.empty());
  Sgd opt(step_param_groups(m, 2, f.cfg), f.cfg.momentum);
  train_epoch(m, opt, &*ctx.teacher, f.domains[1].load_train(), 2, 0, f.cfg);
  for (const auto& p : m.parameters()) {
    if (p.kind == GroupKind::shared) EXPECT_TRUE(bitwise_equal(p.tensor.data(), shared[p.name])) << p.name;
  }
  end_step(m, ctx);
  for (const auto& [name, v] : shared) EXPECT_FALSE(m.is_frozen(name)) << name;
}

TEST(TrainEpoch, ToyTrainingLowersCrossEntropy) {
  const std::vector<DomainData> d{test::small_domain(0, 32, 4)};
  TrainConfig cfg = test::quick_train(5);
  const SequenceResult r = run_sequence(test::tiny_model(), d, cfg);
  const auto& e = r.reports[0].epochs;
  ASSERT_EQ(e.size(), 5u);
  EXPECT_LT(e.back().ce, e.front().ce);
  for (const auto& x : e) EXPECT_EQ(x.ws, x.ce + x.kld);
}

TEST(RunSequence, ReportsFollowConfig) {
  std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  TrainConfig cfg = test::quick_train(2);
  cfg.first_epochs = 3;
  const SequenceResult r = run_sequence(test::tiny_model(), d, cfg);
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.reports[0].epochs.size(), 3u);
  EXPECT_EQ(r.reports[1].epochs.size(), 2u);
  EXPECT_EQ(r.reports[1].evals.size(), 2u);
  EXPECT_EQ(r.reports[1].eval_of("A").domain, "A");
  EXPECT_FALSE(r.reports[1].echo.empty());
  EXPECT_THROW(r.reports[0].eval_of("B"), Error);
  EXPECT_TRUE(r.model.frozen().count("dec.dom1.cls.w"));
}

TEST(RunSequence, TrainingDataIsReadOncePerStep) {
  std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  std::vector<int> loads(2, 0);
  for (int i = 0; i < 2; ++i) {
    auto inner = d[i].load_train;
    d[i].load_train = [inner, &loads, i] {
      ++loads[i];
      return inner();
    };
  }
  run_sequence(test::tiny_model(), d, test::quick_train(2));
  EXPECT_EQ(loads, (std::vector<int>{1, 1}));
}

TEST(RunSequence, DeterministicAndResumable) {
  std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  const TrainConfig cfg = test::quick_train();
  const SequenceResult a = run_sequence(test::tiny_model(), d, cfg);
  const SequenceResult b = run_sequence(test::tiny_model(), d, cfg);
  expect_same_state(a.model, b.model);
  expect_same_reports(a.reports, b.reports);
  SequenceResult first = run_sequence(test::tiny_model(), std::span(d).first(1), cfg);
  const SequenceResult resumed = resume_sequence(std::move(first), d, cfg);
  expect_same_state(a.model, resumed.model);
  expect_same_reports(a.reports, resumed.reports);
}

TEST(RunSequence, RejectsBadSequences) {
  std::vector<DomainData> d{test::small_domain(0), test::small_domain(0)};
  EXPECT_THROW(run_sequence(test::tiny_model(), d, test::quick_train()), Error);
  std::vector<DomainData> other{test::small_domain(1)};
  SequenceResult first = run_sequence(test::tiny_model(), std::span(d).first(1), test::quick_train());
  EXPECT_THROW(resume_sequence(std::move(first), other, test::quick_train()), Error);
}

TEST(RunSequence, LengthOneEqualsSingleTask) {
  const std::vector<DomainData> d{test::small_domain(0)};
  const TrainConfig cfg = test::quick_train(2);
  const ModelConfig plain = test::tiny_model(false);
  const SequenceResult seq = run_sequence(plain, d, baseline_setup(BaselineKind::ft_multihead, plain, cfg).train);
  const BaselineResult st = run_baseline(BaselineKind::single_task, d, plain, cfg);
  expect_same_state(seq.model, st.run.model);
  expect_same_reports(seq.reports, st.run.reports);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dlr = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c.freeze_shared = true;
  EXPECT_NO_THROW(c.validate());
  c = {};
  c.lambda_kld = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(TrainConfig{}.epochs_for(1), TrainConfig{}.first_epochs);
  EXPECT_EQ(TrainConfig{}.epochs_for(2), TrainConfig{}.epochs);
  EXPECT_EQ(TrainConfig{}.batch_for(1), TrainConfig{}.first_batch_size);
  EXPECT_EQ(TrainConfig{}.batch_for(3), TrainConfig{}.batch_size);
}

TEST(TrainConfig, PolyScheduleRuns) {
  std::vector<DomainData> d{test::small_domain(0)};
  TrainConfig cfg = test::quick_train(2);
  const SequenceResult constant = run_sequence(test::tiny_model(), d, cfg);
  cfg.schedule = LrSchedule::poly;
  const SequenceResult poly = run_sequence(test::tiny_model(), d, cfg);
  EXPECT_NE(constant.reports[0].epochs.back().ce, poly.reports[0].epochs.back().ce);
}

TEST(TrainConfig, StepBatchSizesAreSeparate) {
  std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  TrainConfig a = test::quick_train();
  TrainConfig b = a;
  b.batch_size = 1;
  const SequenceResult ra = run_sequence(test::tiny_model(), d, a);
  const SequenceResult rb = run_sequence(test::tiny_model(), d, b);
  EXPECT_EQ(ra.reports[0].evals[0].cm, rb.reports[0].evals[0].cm);
  EXPECT_NE(ra.reports[1].epochs[0].ce, rb.reports[1].epochs[0].ce);
}

}  // namespace
}  // namespace mdil
