#include "mdil/optim.hpp"

#include <unordered_set>

namespace mdil {

Sgd::Sgd(std::vector<ParamGroup> groups, double momentum)
    : groups_(std::move(groups)), momentum_(momentum) {
  if (momentum < 0.0 || momentum >= 1.0) throw Error("Sgd: momentum must lie in [0, 1)");
  std::unordered_set<const void*> seen;
  for (const auto& g : groups_) {
    if (g.lr < 0.0) throw Error("Sgd: negative learning rate in group '" + g.label + "'");
    for (const auto& p : g.params) {
      if (!p.tensor.requires_grad()) {
        throw Error("Sgd: parameter '" + p.name + "' in group '" + g.label + "' is frozen");
      }
      if (!seen.insert(p.tensor.impl().get()).second) {
        throw Error("Sgd: parameter '" + p.name + "' appears in more than one group");
      }
    }
  }
  velocity_.resize(groups_.size());
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    for (const auto& p : groups_[gi].params) {
      velocity_[gi].emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    }
  }
}

void Sgd::step() {
  const auto mom = static_cast<float>(momentum_);
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    auto& group = groups_[gi];
    const auto lr = static_cast<float>(group.lr * scale_);
    for (std::size_t pi = 0; pi < group.params.size(); ++pi) {
      Tensor& t = group.params[pi].tensor;
      if (lr == 0.0f || !t.has_grad()) continue;
      auto w = t.data();
      const auto g = t.grad();
      auto& v = velocity_[gi][pi];
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mom * v[i] + g[i];
        w[i] -= lr * v[i];
      }
    }
  }
  zero_grad();
}

void Sgd::set_lr_scale(double scale) {
  if (!(scale >= 0.0)) throw Error("Sgd: lr scale must be >= 0");
  scale_ = scale;
}

void Sgd::zero_grad() {
  for (auto& group : groups_) {
    for (auto& p : group.params) p.tensor.zero_grad();
  }
}

}  // namespace mdil
