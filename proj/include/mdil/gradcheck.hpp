#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mdil {

/// Differentiable ops covered by the finite-difference harness.
enum class GradOp {
  conv2d,
  transposed_conv2d,
  batchnorm2d,
  relu,
  log_softmax,
  cross_entropy,
  kl_div,
  dau_residual,
  composite,  // conv -> bn -> relu -> cross entropy
};

const std::vector<GradOp>& all_grad_ops();
std::string grad_op_name(GradOp op);

struct GradCheckOptions {
  int seeds = 20;
  std::uint64_t base_seed = 1;
  double step = 1e-4;       // central difference step
  double tolerance = 1e-4;  // on the norm-wise relative error
  /// Test hook: scales the analytic gradient of the first input by 1.001.
  bool inject_fault = false;
};

struct GradCheckResult {
  GradOp op;
  int seeds = 0;
  double max_error = 0;  // worst ||g_a - g_n|| / max(||g_a||, ||g_n||) over seeds and inputs
  std::uint64_t worst_seed = 0;
  bool pass = false;
};

/// Analytic (double precision) vs central-difference gradients of a random
/// projection of the op output, for every input of the op, on `seeds`
/// independently drawn problems.
GradCheckResult check_gradients(GradOp op, const GradCheckOptions& opts = {});

}  // namespace mdil
