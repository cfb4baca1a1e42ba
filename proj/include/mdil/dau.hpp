#pragma once

#include "mdil/ops.hpp"

namespace mdil {

/// Affine batch norm: learnable scale/shift plus running statistics.
template <typename T>
struct BatchNormLayer {
  BasicTensor<T> scale;
  BasicTensor<T> shift;
  BnStats<T> stats;

  static BatchNormLayer fresh(std::int64_t channels) {
    return {BasicTensor<T>::full({channels}, T(1)), BasicTensor<T>::zeros({channels}),
            BnStats<T>::fresh(channels)};
  }

  BatchNormLayer clone() const { return {scale.clone(), shift.clone(), stats.clone()}; }

  /// A layer whose scale is frozen never folds batch statistics: it always
  /// runs in infer mode, so a frozen layer stays bitwise constant.
  BasicTensor<T> operator()(const BasicTensor<T>& x, BnMode mode, const BnOptions& opts) {
    const BnMode effective = scale.requires_grad() ? mode : BnMode::infer;
    return batchnorm2d(x, scale, shift, stats, effective, opts);
  }
};

/// The weights one domain sees when it passes through a residual unit.
/// Adapters are optional (undefined tensors skip the parallel branch).
template <typename T>
struct DauPath {
  BasicTensor<T> w1;
  BasicTensor<T> w2;
  BasicTensor<T> aw1;
  BasicTensor<T> aw2;
  BatchNormLayer<T>* bn1 = nullptr;
  BatchNormLayer<T>* bn2 = nullptr;
};

/// Domain-aware residual unit:
///   h1  = relu(bn1(w1 * x + aw1 * x))
///   h2  = bn2(w2 * h1 + aw2 * h1)
///   out = relu(x + h2)
/// with 3x3 shared convolutions and 1x1 domain adapters in parallel.
template <typename T>
BasicTensor<T> dau_residual(const BasicTensor<T>& x, const DauPath<T>& p, BnMode mode,
                            const BnOptions& opts) {
  auto branch = [](const BasicTensor<T>& in, const BasicTensor<T>& shared,
                   const BasicTensor<T>& adapter) {
    auto y = conv2d(in, shared, 1);
    return adapter.defined() ? add(y, conv2d(in, adapter, 1, 0)) : y;
  };
  auto h1 = relu((*p.bn1)(branch(x, p.w1, p.aw1), mode, opts));
  auto h2 = (*p.bn2)(branch(h1, p.w2, p.aw2), mode, opts);
  return relu(add(x, h2));
}

}  // namespace mdil
