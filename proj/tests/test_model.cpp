#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "mdil/error.hpp"
#include "mdil/model.hpp"
#include "test_util.hpp"

namespace mdil {
namespace {

using test::bitwise_equal;
using test::random_input;
using test::tiny_model;

LabelSpace labels(std::size_t n) {
  std::vector<std::string> names{"background", "rectangle", "disk", "triangle", "ring", "cross"};
  names.resize(n);
  return LabelSpace(names);
}

Model two_domain_model(InitMode second = InitMode::init_wt, std::uint64_t seed = 3) {
  Rng rng(seed);
  Model m(tiny_model(), rng);
  m.add_domain({"A", labels(3), ""}, InitMode::random, rng);
  m.add_domain({"B", labels(4), ""}, second, rng);
  return m;
}

std::map<std::string, Tensor> by_name(const std::vector<ParamRef>& params) {
  std::map<std::string, Tensor> out;
  for (const auto& p : params) out[p.name] = p.tensor;
  return out;
}

TEST(Model, SameSeedBuildsAreBitwiseEqual) {
  Rng r1(9), r2(9);
  const Model a = build_model(ModelConfig::dau(), {"A", labels(6), ""}, r1);
  const Model b = build_model(ModelConfig::dau(), {"A", labels(6), ""}, r2);
  const auto pa = a.state(), pb = b.state();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(bitwise_equal(pa[i].tensor, pb[i].tensor)) << pa[i].name;
  }
}

TEST(Model, ForwardShapeAtInputResolution) {
  Rng rng(1);
  Model m = build_model(ModelConfig::dau(), {"A", labels(6), ""}, rng);
  NoGradGuard guard;
  const Tensor y = m.forward(random_input(2, 1, 64), 1, BnMode::infer);
  EXPECT_EQ(y.shape(), (Shape{1, 6, 64, 64}));
}

TEST(Model, ParameterNaming) {
  const Model m = two_domain_model();
  const auto names = by_name(m.parameters());
  for (const char* n : {"enc.stage1.down.w", "enc.stage1.down.dom1.bn.scale", "enc.stage2.down.dom2.bn.shift",
                        "enc.stage1.unit1.w1", "enc.stage1.unit1.w2", "enc.stage1.unit1.dom1.aw1",
                        "enc.stage2.unit1.dom2.bn2.scale", "dec.dom1.up1.w", "dec.dom2.up2.bn.scale",
                        "dec.dom2.cls.w"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
  bool has_stats = false;
  for (const auto& b : m.buffers()) has_stats |= b.name == "enc.stage1.unit1.dom2.bn1.running_var";
  EXPECT_TRUE(has_stats);
}

TEST(Model, ClassifierMatchesLabelSpace) {
  Model m = two_domain_model();
  const auto names = by_name(m.parameters());
  EXPECT_EQ(names.at("dec.dom1.cls.w").dim(0), 3);
  EXPECT_EQ(names.at("dec.dom2.cls.w").dim(0), 4);
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("dec.dom2", 0) == 0) {
      EXPECT_EQ(p.kind, GroupKind::decoder);
      EXPECT_EQ(p.domain, 2);
    }
  }
}

TEST(Model, PartitionIsExhaustiveAndDisjoint) {
  const Model m = two_domain_model();
  const auto part = param_partition(m);
  const auto params = m.parameters();
  std::map<std::string, std::int64_t> numel;
  for (const auto& p : params) numel[p.name] = p.tensor.numel();
  std::set<std::string> seen;
  std::int64_t scalars = 0;
  auto take = [&](const std::set<std::string>& names) {
    for (const auto& n : names) {
      EXPECT_TRUE(seen.insert(n).second) << n << " in two sets";
      ASSERT_TRUE(numel.count(n)) << n;
      scalars += numel[n];
    }
  };
  take(part.shared);
  for (const auto& [t, names] : part.domain) take(names);
  EXPECT_EQ(seen.size(), params.size());
  EXPECT_EQ(part.size(), params.size());
  EXPECT_EQ(scalars, parameter_count(params));
  for (const auto& p : params) {
    if (p.kind == GroupKind::shared) {
      EXPECT_TRUE(part.shared.count(p.name));
    } else {
      EXPECT_TRUE(part.domain.at(p.domain).count(p.name));
    }
  }
}

TEST(SharingRatio, SingleUnitHandCount) {
  Rng rng(2);
  DauUnit unit(4, rng);
  unit.add_slot(true, 0.01, rng);
  std::vector<ParamRef> one;
  unit.collect("u", false, one);
  // shared 2 * 3*3*4*4 = 288; one domain 2 * 4*4 + 2 * 2*4 = 48
  EXPECT_EQ(parameter_count(one), 336);
  EXPECT_DOUBLE_EQ(sharing_ratio(one), 288.0 / 336.0);
  unit.add_slot(true, 0.01, rng);
  std::vector<ParamRef> two;
  unit.collect("u", false, two);
  EXPECT_EQ(parameter_count(two), 384);
  EXPECT_EQ(sharing_ratio(two), 0.75);
}

TEST(SharingRatio, DefaultThreeDomainModel) {
  Rng rng(1);
  Model m(ModelConfig::dau(), rng);
  for (const char* d : {"A", "B", "C"}) m.add_domain({d, labels(6), ""}, InitMode::init_wt, rng);
  // Shared: 3x3 downsamplers 3->16, 16->32 and two units of two 3x3 convs per stage.
  const std::int64_t shared = 3 * 16 * 9 + 16 * 32 * 9 + 2 * 2 * (16 * 16 * 9) + 2 * 2 * (32 * 32 * 9);
  // Per domain: downsampler BN, unit adapters and BN, two 2x2 up blocks with BN, classifier.
  const std::int64_t enc = 2 * 16 + 2 * 32 + 2 * (2 * 16 * 16 + 4 * 16) + 2 * (2 * 32 * 32 + 4 * 32);
  const std::int64_t dec = 32 * 8 * 4 + 2 * 8 + 8 * 8 * 4 + 2 * 8 + 6 * 8;
  const std::int64_t per_domain = enc + dec;
  EXPECT_EQ(parameter_count(m.parameters()), shared + 3 * per_domain);
  const double want = static_cast<double>(shared) / static_cast<double>(shared + 3 * per_domain);
  EXPECT_DOUBLE_EQ(sharing_ratio(m), want);
  EXPECT_GT(sharing_ratio(m), 0.70);
}

TEST(SharingRatio, PlainNetworkSharesEncoderOnly) {
  Rng rng(1);
  Model m(tiny_model(false), rng);
  m.add_domain({"A", labels(3), ""}, InitMode::random, rng);
  std::int64_t enc = 0;
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("enc.", 0) == 0) {
      EXPECT_EQ(p.kind, GroupKind::shared) << p.name;
      enc += p.tensor.numel();
    }
  }
  EXPECT_DOUBLE_EQ(sharing_ratio(m), static_cast<double>(enc) / static_cast<double>(parameter_count(m.parameters())));
}

TEST(Model, AddDomainLeavesOldOutputsBitwise) {
  Rng rng(4);
  Model m(tiny_model(), rng);
  m.add_domain({"A", labels(3), ""}, InitMode::random, rng);
  const Tensor x = random_input(5);
  NoGradGuard guard;
  const Tensor before = m.forward(x, 1, BnMode::infer);
  m.add_domain({"B", labels(4), ""}, InitMode::init_wt, rng);
  m.add_domain({"C", labels(3), ""}, InitMode::random, rng);
  EXPECT_TRUE(bitwise_equal(before, m.forward(x, 1, BnMode::infer)));
}

TEST(Model, InitWtCopiesAllButClassifier) {
  const Model m = two_domain_model(InitMode::init_wt);
  const auto p = by_name(m.parameters());
  int copied = 0;
  for (const auto& [name, t] : p) {
    const auto pos = name.find("dom2");
    if (pos == std::string::npos) continue;
    std::string prev = name;
    prev.replace(pos, 4, "dom1");
    if (name == "dec.dom2.cls.w") {
      EXPECT_NE(t.shape(), p.at(prev).shape());
      continue;
    }
    EXPECT_TRUE(bitwise_equal(t, p.at(prev))) << name;
    EXPECT_FALSE(t.same_storage(p.at(prev))) << name;
    ++copied;
  }
  EXPECT_GT(copied, 10);
  auto buffers = test::capture(m.buffers());
  EXPECT_EQ(buffers.at("enc.stage1.unit1.dom2.bn1.running_mean"), buffers.at("enc.stage1.unit1.dom1.bn1.running_mean"));
}

TEST(Model, InitWtClassifierIsFreshWithSameClasses) {
  Rng rng(3);
  Model m(tiny_model(), rng);
  m.add_domain({"A", labels(3), ""}, InitMode::random, rng);
  m.add_domain({"B", labels(3), ""}, InitMode::init_wt, rng);
  const auto p = by_name(m.parameters());
  EXPECT_FALSE(bitwise_equal(p.at("dec.dom1.cls.w"), p.at("dec.dom2.cls.w")));
}

TEST(Model, RandomInitDrawsNewAdapters) {
  const Model m = two_domain_model(InitMode::random);
  const auto p = by_name(m.parameters());
  EXPECT_FALSE(bitwise_equal(p.at("enc.stage1.unit1.dom1.aw1"), p.at("enc.stage1.unit1.dom2.aw1")));
}

TEST(Model, RoutingIsolation) {
  Rng rng(6);
  Model m(tiny_model(), rng);
  for (const char* d : {"A", "B", "C"}) m.add_domain({d, labels(3), ""}, InitMode::random, rng);
  const Tensor x = random_input(7);
  NoGradGuard guard;
  for (int j = 1; j <= 3; ++j) {
    std::vector<Tensor> outs;
    for (int t = 1; t <= 3; ++t) outs.push_back(m.forward(x, t, BnMode::infer));
    Model perturbed = m.clone();
    for (const auto& p : perturbed.parameters()) {
      if (p.domain != j) continue;
      Tensor h = p.tensor;
      for (auto& v : h.data()) v = v * 1.5f + 0.25f;
    }
    for (const auto& b : perturbed.buffers()) {
      if (b.name.find("dom" + std::to_string(j) + ".") == std::string::npos) continue;
      Tensor h = b.tensor;
      for (auto& v : h.data()) v += 0.5f;
    }
    for (int t = 1; t <= 3; ++t) {
      const Tensor y = perturbed.forward(x, t, BnMode::infer);
      if (t == j) {
        EXPECT_FALSE(bitwise_equal(outs[t - 1], y)) << "domain " << t;
      } else {
        EXPECT_TRUE(bitwise_equal(outs[t - 1], y)) << "domain " << t << " after touching " << j;
      }
    }
  }
}

TEST(Model, TrainModeForwardOnlyTouchesOwnStats) {
  Model m = two_domain_model();
  const auto before = test::capture(m.buffers());
  NoGradGuard guard;
  m.forward(random_input(8), 2, BnMode::train);
  const auto after = test::capture(m.buffers());
  bool any_changed = false;
  for (const auto& [name, v] : before) {
    if (name.find("dom2") == std::string::npos) {
      EXPECT_EQ(v, after.at(name)) << name;
    } else {
      any_changed |= v != after.at(name);
    }
  }
  EXPECT_TRUE(any_changed);
}

TEST(Model, InferTwiceIsBitwise) {
  Model m = two_domain_model();
  const Tensor x = random_input(9);
  NoGradGuard guard;
  EXPECT_TRUE(bitwise_equal(m.forward(x, 2, BnMode::infer), m.forward(x, 2, BnMode::infer)));
}

TEST(Snapshot, MatchesModelAtCreation) {
  Model m = two_domain_model();
  const Snapshot snap(m);
  const Tensor x = random_input(10);
  Tensor live;
  {
    NoGradGuard guard;
    live = m.forward(x, 1, BnMode::infer);
  }
  EXPECT_TRUE(bitwise_equal(live, snap.forward(x, 1)));
  for (const auto& p : m.parameters()) {
    Tensor h = p.tensor;
    for (auto& v : h.data()) v += 1.0f;
  }
  EXPECT_TRUE(bitwise_equal(live, snap.forward(x, 1)));
}

TEST(Model, FreezeAllAndUnknownDomain) {
  Model m = two_domain_model();
  m.freeze_all();
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
  EXPECT_THROW(m.domain_index("Z"), Error);
  EXPECT_EQ(m.domain_index("B"), 2);
  Rng rng(1);
  EXPECT_THROW(m.add_domain({"A", labels(3), ""}, InitMode::random, rng), Error);
}

TEST(Model, SingleHeadSharesUnionClassifier) {
  ModelConfig cfg = tiny_model(false);
  cfg.single_head = true;
  Rng rng(2);
  Model m(cfg, rng);
  m.add_domain({"A", labels(3), ""}, InitMode::random, rng);
  m.add_domain({"B", LabelSpace({"background", "disk", "stripe"}), ""}, InitMode::random, rng);
  EXPECT_EQ(m.union_labels().size(), 4u);
  EXPECT_EQ(m.class_channels(2), (std::vector<std::uint8_t>{0, 2, 3}));
  NoGradGuard guard;
  const auto pred = m.predict(random_input(3), 2);
  for (auto v : pred) EXPECT_LT(v, 3);
}

}  // namespace
}  // namespace mdil
