#include <gtest/gtest.h>

#include "mdil/baselines.hpp"
#include "mdil/error.hpp"
#include "test_util.hpp"

namespace mdil {
namespace {

using test::bitwise_equal;

bool same_flags(const MethodFlags& a, const MethodFlags& b) {
  return a.kld == b.kld && a.dlr == b.dlr && a.init_wt == b.init_wt && a.dau == b.dau;
}

TEST(Baselines, NamesRoundtrip) {
  EXPECT_EQ(all_baselines().size(), 10u);
  for (auto k : all_baselines()) EXPECT_EQ(parse_baseline(baseline_name(k)), k);
  EXPECT_FALSE(parse_baseline("ours").has_value());
  EXPECT_FALSE(parse_baseline("nope").has_value());
}

TEST(AblationGrid, FlagPattern) {
  // (distillation, differential lr, init from previous domain, adapters)
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::dau_ft), {false, false, false, true}));
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::dau_ft_dlr1), {false, false, true, true}));
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::dau_ft_rinit), {false, true, false, true}));
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::dau_ft_dlr), {false, true, true, true}));
  EXPECT_TRUE(same_flags(ours_flags(), {true, true, true, true}));
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::lwf_multihead), {true, false, false, false}));
  EXPECT_TRUE(same_flags(method_flags(BaselineKind::ft_multihead), {false, false, false, false}));
}

TEST(AblationGrid, SetupsFollowFlags) {
  const ModelConfig m = ModelConfig::dau();
  TrainConfig base;
  base.lr = 0.03;
  base.dlr = 7;
  base.use_kld = true;
  struct Want {
    BaselineKind kind;
    bool kld;
    double dlr;
    InitMode init;
    bool adapters;
  };
  const Want grid[] = {
      {BaselineKind::dau_ft, false, 1.0, InitMode::random, true},
      {BaselineKind::dau_ft_dlr1, false, 1.0, InitMode::init_wt, true},
      {BaselineKind::dau_ft_rinit, false, 100.0, InitMode::random, true},
      {BaselineKind::dau_ft_dlr, false, 100.0, InitMode::init_wt, true},
      {BaselineKind::ft_multihead, false, 1.0, InitMode::random, false},
      {BaselineKind::lwf_multihead, true, 1.0, InitMode::random, false},
  };
  for (const auto& w : grid) {
    const MethodSetup s = baseline_setup(w.kind, m, base);
    EXPECT_EQ(s.train.use_kld, w.kld) << baseline_name(w.kind);
    EXPECT_EQ(s.train.dlr, w.dlr) << baseline_name(w.kind);
    EXPECT_EQ(s.train.init, w.init) << baseline_name(w.kind);
    EXPECT_EQ(s.model.adapters, w.adapters) << baseline_name(w.kind);
    EXPECT_EQ(s.model.domain_bn, w.adapters) << baseline_name(w.kind);
    EXPECT_FALSE(s.train.freeze_shared);
    EXPECT_EQ(s.train.lr, 0.03);
  }
  const MethodSetup ours = ours_setup(m, base);
  EXPECT_TRUE(ours.train.use_kld);
  EXPECT_EQ(ours.train.dlr, 7.0);
  EXPECT_EQ(ours.train.init, InitMode::init_wt);
  EXPECT_TRUE(ours.model.adapters);
  EXPECT_TRUE(baseline_setup(BaselineKind::feature_extract, m, base).train.freeze_shared);
  EXPECT_TRUE(baseline_setup(BaselineKind::ft_singlehead, m, base).model.single_head);
}

TEST(Remap, BijectionOntoLocalSpace) {
  UnionLabelSpace u;
  const LabelSpace a({"background", "disk", "cross"});
  const LabelSpace b({"background", "stripe", "disk"});
  u.add("A", a);
  u.add("B", b);
  EXPECT_EQ(u.size(), 4u);
  const std::vector<std::uint8_t> local{0, 1, 2, kIgnoreLabel, 2};
  const auto global = remap_labels(local, b, u, "B");
  EXPECT_EQ(global, (std::vector<std::uint8_t>{0, 3, 1, kIgnoreLabel, 1}));
  EXPECT_EQ(unmap_labels(global, b, u, "B"), local);
  const std::vector<std::uint8_t> foreign{2};  // "cross" is not in B
  EXPECT_THROW(unmap_labels(foreign, b, u, "B"), Error);
  const std::vector<std::uint8_t> bad{3};
  EXPECT_THROW(remap_labels(bad, b, u, "B"), Error);
}

TEST(Baselines, SingleTaskTakesOneDomain) {
  const std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  EXPECT_THROW(run_baseline(BaselineKind::single_task, d, test::tiny_model(false), test::quick_train()), Error);
}

TEST(Baselines, FeatureExtractionForgetsNothing) {
  const std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  const BaselineResult r = run_baseline(BaselineKind::feature_extract, d, test::tiny_model(), test::quick_train(2));
  ASSERT_EQ(r.run.reports.size(), 2u);
  const auto& a1 = r.run.reports[0].eval_of("A");
  const auto& a2 = r.run.reports[1].eval_of("A");
  EXPECT_EQ(a1.cm, a2.cm);
  EXPECT_EQ(forgetting_delta(a1.miou, a2.miou), 0.0);
  EXPECT_FALSE(r.violates_incremental);
}

TEST(Baselines, LwfWithoutDistillationIsFineTuning) {
  const std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  TrainConfig cfg = test::quick_train();
  cfg.lambda_kld = 0;
  const BaselineResult lwf = run_baseline(BaselineKind::lwf_multihead, d, test::tiny_model(), cfg);
  const BaselineResult ft = run_baseline(BaselineKind::ft_multihead, d, test::tiny_model(), cfg);
  const auto a = lwf.run.model.state(), b = ft.run.model.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a[i].tensor, b[i].tensor)) << a[i].name;
}

TEST(Baselines, JointSeesEveryDomainAtOnce) {
  const std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  const BaselineResult r = run_baseline(BaselineKind::joint_multitask, d, test::tiny_model(), test::quick_train());
  EXPECT_TRUE(r.violates_incremental);
  EXPECT_EQ(r.max_domains_per_step, 2);
  ASSERT_EQ(r.run.reports.size(), 1u);
  EXPECT_EQ(r.run.reports[0].evals.size(), 2u);
  EXPECT_FALSE(r.run.model.config().adapters);
}

TEST(Baselines, SingleHeadUsesUnionSpace) {
  const std::vector<DomainData> d{test::small_domain(0), test::small_domain(1)};
  const BaselineResult r = run_baseline(BaselineKind::ft_singlehead, d, test::tiny_model(), test::quick_train());
  EXPECT_TRUE(r.run.model.config().single_head);
  EXPECT_EQ(r.run.model.union_labels().size(), 7u);
  EXPECT_EQ(r.run.reports[1].evals.size(), 2u);
}

TEST(Baselines, StepOneDependsOnlyOnNetworkShape) {
  // The ordering experiment trains step 1 once per network and reuses it.
  const std::vector<DomainData> d{test::small_domain(0)};
  const ModelConfig m = test::tiny_model();
  const TrainConfig base = test::quick_train(2);
  auto step_one = [&](const MethodSetup& s) { return run_sequence(s.model, d, s.train).model.state(); };
  auto equal = [](const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].name != b[i].name || !bitwise_equal(a[i].tensor, b[i].tensor)) return false;
    }
    return true;
  };
  const auto ours = step_one(ours_setup(m, base));
  EXPECT_TRUE(equal(ours, step_one(baseline_setup(BaselineKind::dau_ft_dlr, m, base))));
  const auto ft = step_one(baseline_setup(BaselineKind::ft_multihead, m, base));
  EXPECT_TRUE(equal(ft, step_one(baseline_setup(BaselineKind::feature_extract, m, base))));
  EXPECT_TRUE(equal(ft, step_one(baseline_setup(BaselineKind::single_task, m, base))));
}

}  // namespace
}  // namespace mdil
