#include "mdil/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdil {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct Geometry {
  std::int64_t channels, height, width;  // image side
  std::int64_t kernel, stride, pad;
  std::int64_t out_h, out_w;             // column grid
};

// col[(c*k + ki)*k + kj][oh*out_w + ow] = img[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
  const std::int64_t cols = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kernel; ++ki) {
      for (std::int64_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + ih) * g.width;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters (accumulates) columns back onto the image.
template <typename T>
void col2im(const T* col, const Geometry& g, T* img) {
  const std::int64_t cols = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ki = 0; ki < g.kernel; ++ki) {
      for (std::int64_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.height) continue;
          T* dst = img + (c * g.height + ih) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw Error(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                shape_str(s));
  }
}

template <typename T>
bool needs_grad(const std::shared_ptr<TensorImpl<T>>& t) {
  return t && t->requires_grad;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(w.shape(), 4, "conv2d weight");
  const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw Error("conv2d channel mismatch: input " + shape_str(x.shape()) + ", weight " +
                shape_str(w.shape()));
  }
  if (w.dim(3) != k) throw Error("conv2d needs a square kernel, got " + shape_str(w.shape()));
  if (stride <= 0 || pad < 0) throw Error("conv2d: invalid stride/padding");
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (wd + 2 * pad - k) / stride + 1;
  if (h + 2 * pad - k < 0 || ho <= 0 || wo <= 0) {
    throw Error("conv2d: non-positive output extent for input " + shape_str(x.shape()));
  }

  const Geometry g{cin, h, wd, k, stride, pad, ho, wo};
  const std::int64_t kdim = cin * k * k, cols = ho * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  std::vector<T> out(static_cast<std::size_t>(n * cout * cols));
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kdim * cols));
  ConstMapMat<T> wm(w.data().data(), cout, kdim);
  for (std::int64_t b = 0; b < n; ++b) {
    const T* img = x.data().data() + b * cin * h * wd;
    const T* cp = img;
    if (!direct) {
      im2col(img, g, col.data());
      cp = col.data();
    }
    MapMat<T> ym(out.data() + b * cout * cols, cout, cols);
    ym.noalias() = wm * ConstMapMat<T>(cp, kdim, cols);
  }

  auto xi = x.impl();
  auto wi = w.impl();
  return make_result<T>(
      {n, cout, ho, wo}, std::move(out), {xi, wi},
      [xi, wi, g, n, cout, kdim, cols, direct](const TensorImpl<T>& o) {
        const std::int64_t img_size = g.channels * g.height * g.width;
        std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kdim * cols));
        std::vector<T> dcol(static_cast<std::size_t>(kdim * cols));
        ConstMapMat<T> wm(wi->data.data(), cout, kdim);
        for (std::int64_t b = 0; b < n; ++b) {
          ConstMapMat<T> dy(o.grad.data() + b * cout * cols, cout, cols);
          const T* img = xi->data.data() + b * img_size;
          if (needs_grad(wi)) {
            const T* cp = img;
            if (!direct) {
              im2col(img, g, col.data());
              cp = col.data();
            }
            MapMat<T> dw(wi->ensure_grad().data(), cout, kdim);
            dw.noalias() += dy * ConstMapMat<T>(cp, kdim, cols).transpose();
          }
          if (needs_grad(xi)) {
            T* dx = xi->ensure_grad().data() + b * img_size;
            if (direct) {
              MapMat<T>(dx, kdim, cols).noalias() += wm.transpose() * dy;
            } else {
              MapMat<T>(dcol.data(), kdim, cols).noalias() = wm.transpose() * dy;
              col2im(dcol.data(), g, dx);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> transposed_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride) {
  require_rank(x.shape(), 4, "transposed_conv2d input");
  require_rank(w.shape(), 4, "transposed_conv2d weight");
  const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t cout = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cin) {
    throw Error("transposed_conv2d channel mismatch: input " + shape_str(x.shape()) +
                ", weight " + shape_str(w.shape()));
  }
  if (stride != 2 || w.dim(3) != k || (k != 2 && k != 4)) {
    throw Error("transposed_conv2d supports stride 2 with a 2x2 or 4x4 kernel, got stride " +
                std::to_string(stride) + " and weight " + shape_str(w.shape()));
  }
  const std::int64_t pad = (k - 2) / 2;
  const std::int64_t ho = 2 * h, wo = 2 * wd;
  // The output image is the "input" side of the equivalent forward conv.
  const Geometry g{cout, ho, wo, k, 2, pad, h, wd};
  const std::int64_t kdim = cout * k * k, cols = h * wd;

  std::vector<T> out(static_cast<std::size_t>(n * cout * ho * wo), T(0));
  std::vector<T> col(static_cast<std::size_t>(kdim * cols));
  ConstMapMat<T> wm(w.data().data(), cin, kdim);
  for (std::int64_t b = 0; b < n; ++b) {
    ConstMapMat<T> xm(x.data().data() + b * cin * cols, cin, cols);
    MapMat<T>(col.data(), kdim, cols).noalias() = wm.transpose() * xm;
    col2im(col.data(), g, out.data() + b * cout * ho * wo);
  }

  auto xi = x.impl();
  auto wi = w.impl();
  return make_result<T>(
      {n, cout, ho, wo}, std::move(out), {xi, wi},
      [xi, wi, g, n, cin, kdim, cols](const TensorImpl<T>& o) {
        const std::int64_t out_size = g.channels * g.height * g.width;
        std::vector<T> dcol(static_cast<std::size_t>(kdim * cols));
        ConstMapMat<T> wm(wi->data.data(), cin, kdim);
        for (std::int64_t b = 0; b < n; ++b) {
          im2col(o.grad.data() + b * out_size, g, dcol.data());
          ConstMapMat<T> dc(dcol.data(), kdim, cols);
          if (needs_grad(xi)) {
            MapMat<T>(xi->ensure_grad().data() + b * cin * cols, cin, cols).noalias() += wm * dc;
          }
          if (needs_grad(wi)) {
            ConstMapMat<T> xm(xi->data.data() + b * cin * cols, cin, cols);
            MapMat<T>(wi->ensure_grad().data(), cin, kdim).noalias() += xm * dc.transpose();
          }
        }
      });
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                           const BasicTensor<T>& shift, BnStats<T>& stats, BnMode mode,
                           const BnOptions& opts) {
  require_rank(x.shape(), 4, "batchnorm2d input");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (scale.numel() != c || shift.numel() != c || stats.mean.numel() != c ||
      stats.var.numel() != c) {
    throw Error("batchnorm2d: per-channel parameters must have length " + std::to_string(c));
  }
  if (!(opts.eps > 0)) throw Error("batchnorm2d: eps must be positive");
  const std::int64_t m = n * hw;
  const auto xs = x.data();

  std::vector<T> mean(c), invstd(c);
  if (mode == BnMode::train) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0;
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mean[ch] = static_cast<T>(mu);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + opts.eps));
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      auto rm = stats.mean.data();
      auto rv = stats.var.data();
      rm[ch] = static_cast<T>((1.0 - opts.momentum) * rm[ch] + opts.momentum * mu);
      rv[ch] = static_cast<T>((1.0 - opts.momentum) * rv[ch] + opts.momentum * unbiased);
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = stats.mean.data()[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats.var.data()[ch]) + opts.eps));
    }
  }

  std::vector<T> xhat(xs.size()), out(xs.size());
  const auto sc = scale.data();
  const auto sh = shift.data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        const T v = (xs[base + i] - mean[ch]) * invstd[ch];
        xhat[base + i] = v;
        out[base + i] = sc[ch] * v + sh[ch];
      }
    }
  }

  auto xi = x.impl();
  auto si = scale.impl();
  auto bi = shift.impl();
  const bool batch_stats = mode == BnMode::train;
  return make_result<T>(
      x.shape(), std::move(out), {xi, si, bi},
      [xi, si, bi, xhat = std::move(xhat), invstd = std::move(invstd), n, c, hw, m,
       batch_stats](const TensorImpl<T>& o) {
        const auto& dy = o.grad;
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_dy[ch] += dy[base + i];
              sum_dy_xhat[ch] += dy[base + i] * xhat[base + i];
            }
          }
        }
        if (needs_grad(si)) {
          auto& g = si->ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += static_cast<T>(sum_dy_xhat[ch]);
        }
        if (needs_grad(bi)) {
          auto& g = bi->ensure_grad();
          for (std::int64_t ch = 0; ch < c; ++ch) g[ch] += static_cast<T>(sum_dy[ch]);
        }
        if (needs_grad(xi)) {
          auto& dx = xi->ensure_grad();
          const auto& sc = si->data;
          for (std::int64_t b = 0; b < n; ++b) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const std::int64_t base = (b * c + ch) * hw;
              const T k = sc[ch] * invstd[ch];
              if (batch_stats) {
                const T mdy = static_cast<T>(sum_dy[ch] / static_cast<double>(m));
                const T mdyx = static_cast<T>(sum_dy_xhat[ch] / static_cast<double>(m));
                for (std::int64_t i = 0; i < hw; ++i) {
                  dx[base + i] += k * (dy[base + i] - mdy - xhat[base + i] * mdyx);
                }
              } else {
                for (std::int64_t i = 0; i < hw; ++i) dx[base + i] += k * dy[base + i];
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.vec());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto xi = x.impl();
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi](const TensorImpl<T>& o) {
    auto& dx = xi->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xi->data[i] > T(0)) dx[i] += o.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.vec());
  const auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bs[i];
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result<T>(a.shape(), std::move(out), {ai, bi}, [ai, bi](const TensorImpl<T>& o) {
    for (const auto& in : {ai, bi}) {
      if (!needs_grad(in)) continue;
      auto& g = in->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.vec());
  for (auto& v : out) v *= factor;
  auto ai = a.impl();
  return make_result<T>(a.shape(), std::move(out), {ai}, [ai, factor](const TensorImpl<T>& o) {
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
  });
}

namespace {

struct ChannelLayout {
  std::int64_t outer, channels, inner;
};

ChannelLayout channel_layout(const Shape& s, const char* what) {
  if (s.size() < 2) throw Error(std::string(what) + ": need at least [N, C], got " + shape_str(s));
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  return {s[0], s[1], inner};
}

// Stable log-softmax over the channel axis into `out` (same layout as `in`).
template <typename T>
void log_softmax_into(const T* in, const ChannelLayout& l, T* out) {
  for (std::int64_t b = 0; b < l.outer; ++b) {
    const T* ip = in + b * l.channels * l.inner;
    T* op = out + b * l.channels * l.inner;
    for (std::int64_t p = 0; p < l.inner; ++p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t c = 0; c < l.channels; ++c) mx = std::max(mx, ip[c * l.inner + p]);
      T s = 0;
      for (std::int64_t c = 0; c < l.channels; ++c) s += std::exp(ip[c * l.inner + p] - mx);
      const T lse = mx + std::log(s);
      for (std::int64_t c = 0; c < l.channels; ++c) op[c * l.inner + p] = ip[c * l.inner + p] - lse;
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& x) {
  const auto l = channel_layout(x.shape(), "log_softmax");
  std::vector<T> out(x.vec().size());
  log_softmax_into(x.data().data(), l, out.data());
  auto xi = x.impl();
  auto saved = std::make_shared<std::vector<T>>(out);
  return make_result<T>(x.shape(), std::move(out), {xi}, [xi, saved, l](const TensorImpl<T>& o) {
    auto& dx = xi->ensure_grad();
    const auto& y = *saved;
    for (std::int64_t b = 0; b < l.outer; ++b) {
      const std::int64_t base = b * l.channels * l.inner;
      for (std::int64_t p = 0; p < l.inner; ++p) {
        T s = 0;
        for (std::int64_t c = 0; c < l.channels; ++c) s += o.grad[base + c * l.inner + p];
        for (std::int64_t c = 0; c < l.channels; ++c) {
          const std::int64_t i = base + c * l.inner + p;
          dx[i] += o.grad[i] - std::exp(y[i]) * s;
        }
      }
    }
  });
}

template <typename T>
CrossEntropy<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::uint8_t> labels,
                              std::uint8_t ignore_index) {
  const auto l = channel_layout(logits.shape(), "cross_entropy");
  if (static_cast<std::int64_t>(labels.size()) != l.outer * l.inner) {
    throw Error("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                shape_str(logits.shape()));
  }
  for (auto v : labels) {
    if (v != ignore_index && v >= l.channels) {
      throw Error("cross_entropy: label " + std::to_string(v) + " outside [0, " +
                  std::to_string(l.channels) + ")");
    }
  }
  std::vector<T> logp(logits.vec().size());
  log_softmax_into(logits.data().data(), l, logp.data());

  std::int64_t counted = 0;
  double total = 0;
  for (std::int64_t b = 0; b < l.outer; ++b) {
    for (std::int64_t p = 0; p < l.inner; ++p) {
      const auto y = labels[b * l.inner + p];
      if (y == ignore_index) continue;
      total -= logp[(b * l.channels + y) * l.inner + p];
      ++counted;
    }
  }
  const T loss = counted ? static_cast<T>(total / static_cast<double>(counted)) : T(0);

  auto xi = logits.impl();
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  auto out = make_result<T>(
      {1}, {loss}, {xi},
      [xi, l, counted, ignore_index, logp = std::move(logp), lab = std::move(lab)](
          const TensorImpl<T>& o) {
        if (counted == 0) return;
        auto& dx = xi->ensure_grad();
        const T g = o.grad[0] / static_cast<T>(counted);
        for (std::int64_t b = 0; b < l.outer; ++b) {
          for (std::int64_t p = 0; p < l.inner; ++p) {
            const auto y = lab[b * l.inner + p];
            if (y == ignore_index) continue;
            for (std::int64_t c = 0; c < l.channels; ++c) {
              const std::int64_t i = (b * l.channels + c) * l.inner + p;
              dx[i] += g * (std::exp(logp[i]) - (c == y ? T(1) : T(0)));
            }
          }
        }
      });
  return {std::move(out), counted};
}

template <typename T>
BasicTensor<T> kl_div(const BasicTensor<T>& student_logits, const BasicTensor<T>& teacher_logits) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw Error("kl_div: shape mismatch " + shape_str(student_logits.shape()) + " vs " +
                shape_str(teacher_logits.shape()));
  }
  const auto l = channel_layout(student_logits.shape(), "kl_div");
  const std::size_t size = student_logits.vec().size();
  std::vector<T> ls(size), lt(size);
  log_softmax_into(student_logits.data().data(), l, ls.data());
  log_softmax_into(teacher_logits.data().data(), l, lt.data());
  double total = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const double pt = std::exp(static_cast<double>(lt[i]));
    if (pt > 0) total += pt * (static_cast<double>(lt[i]) - static_cast<double>(ls[i]));
  }
  const std::int64_t pixels = l.outer * l.inner;
  const T value = static_cast<T>(total / static_cast<double>(pixels));

  auto si = student_logits.impl();
  return make_result<T>(
      {1}, {value}, {si},
      [si, pixels, ls = std::move(ls), lt = std::move(lt)](const TensorImpl<T>& o) {
        auto& dx = si->ensure_grad();
        const T g = o.grad[0] / static_cast<T>(pixels);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * (std::exp(ls[i]) - std::exp(lt[i]));
      });
}

template <typename T>
std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>& logits) {
  const auto l = channel_layout(logits.shape(), "argmax_channels");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(l.outer * l.inner));
  const auto d = logits.data();
  for (std::int64_t b = 0; b < l.outer; ++b) {
    for (std::int64_t p = 0; p < l.inner; ++p) {
      std::int64_t best = 0;
      T bv = d[b * l.channels * l.inner + p];
      for (std::int64_t c = 1; c < l.channels; ++c) {
        const T v = d[(b * l.channels + c) * l.inner + p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out[b * l.inner + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

#define MDIL_INSTANTIATE_OPS(T)                                                               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int, int);     \
  template BasicTensor<T> transposed_conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int); \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                      const BasicTensor<T>&, BnStats<T>&, BnMode,             \
                                      const BnOptions&);                                      \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                        \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                    \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&);                                 \
  template CrossEntropy<T> cross_entropy(const BasicTensor<T>&, std::span<const std::uint8_t>, \
                                         std::uint8_t);                                       \
  template BasicTensor<T> kl_div(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template std::vector<std::uint8_t> argmax_channels(const BasicTensor<T>&);

MDIL_INSTANTIATE_OPS(float)
MDIL_INSTANTIATE_OPS(double)

#undef MDIL_INSTANTIATE_OPS

}  // namespace mdil
