#pragma once

#include <cstdint>
#include <span>

#include "mdil/tensor.hpp"

namespace mdil {

inline constexpr std::uint8_t kIgnoreLabel = 255;

enum class BnMode { train, infer };

/// Running statistics of one batch-norm layer. Not parameters: they are
/// updated by the forward pass in train mode, never by an optimizer.
template <typename T>
struct BnStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;

  static BnStats fresh(std::int64_t channels) {
    return {BasicTensor<T>::zeros({channels}), BasicTensor<T>::full({channels}, T(1))};
  }
  BnStats clone() const { return {mean.clone(), var.clone()}; }
};

struct BnOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,k,k], no bias.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad);

/// Same, with the usual "same" padding (k-1)/2.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride = 1) {
  return conv2d(x, w, stride, static_cast<int>((w.dim(2) - 1) / 2));
}

/// Stride-2 transposed convolution, w[Cin,Cout,k,k] with k in {2, 4}.
/// Padding is chosen so the output is exactly twice the input extent.
template <typename T>
BasicTensor<T> transposed_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride = 2);

/// Per-channel batch normalisation followed by scale/shift.
///
/// Train mode normalises with biased batch statistics and folds the batch
/// mean and unbiased variance into `stats` with the given momentum. Infer mode
/// normalises with `stats` and leaves them untouched.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                           const BasicTensor<T>& shift, BnStats<T>& stats, BnMode mode,
                           const BnOptions& opts = {});

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// Log-softmax over axis 1 of a tensor shaped [N, C, ...].
template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x);

template <typename T>
struct CrossEntropy {
  BasicTensor<T> loss;   // scalar
  std::int64_t counted;  // pixels that contributed; 0 means everything was ignored
};

/// Mean negative log-likelihood over pixels whose label is not ignore_index.
template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::uint8_t> labels,
                              std::uint8_t ignore_index = kIgnoreLabel);

/// KL(teacher || student) of the per-pixel channel softmaxes, averaged over
/// pixels. The teacher is a constant: no gradient reaches it.
template <typename T>
BasicTensor<T> kl_div(const BasicTensor<T>& student_logits, const BasicTensor<T>& teacher_logits);

/// Per-pixel argmax over channels; ties go to the lowest index.
template <typename T>
std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>& logits);

}  // namespace mdil
