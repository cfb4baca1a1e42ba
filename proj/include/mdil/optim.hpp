#pragma once

#include <string>
#include <vector>

#include "mdil/tensor.hpp"

namespace mdil {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ParamGroup {
  std::string label;
  std::vector<NamedTensor> params;
  double lr = 0.0;
};

/// SGD with heavy-ball momentum and one learning rate per group:
///   v <- momentum * v + g;  w <- w - lr * v
/// Velocity buffers live as long as the optimizer. A group whose lr is zero
/// is left bitwise untouched. Grads are cleared after every step.
class Sgd {
 public:
  Sgd(std::vector<ParamGroup> groups, double momentum);

  void step();
  void zero_grad();
  /// Multiplies every group's lr at the next steps (schedules); ratios
  /// between groups are kept.
  void set_lr_scale(double scale);
  double lr_scale() const { return scale_; }

  const std::vector<ParamGroup>& groups() const { return groups_; }
  double momentum() const { return momentum_; }

 private:
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<std::vector<float>>> velocity_;
  double momentum_;
  double scale_ = 1.0;
};

}  // namespace mdil
