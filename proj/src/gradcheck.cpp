#include "mdil/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "mdil/dau.hpp"
#include "mdil/error.hpp"
#include "mdil/rng.hpp"

namespace mdil {

namespace {

using D = TensorD;

D random_tensor(const Shape& shape, Rng& rng, double sd = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal(0.0, sd);
  return D::from(shape, std::move(v));
}

// sum(x * r) with r constant; turns any op output into a scalar.
D project(const D& x, const std::vector<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s += x.data()[i] * r[i];
  return make_result<double>({1}, {s}, {x.impl()}, [r, xi = x.impl()](const TensorImpl<double>& out) {
    if (!xi->requires_grad) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < r.size(); ++i) g[i] += out.grad[0] * r[i];
  });
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// A problem: named leaf inputs and a loss built from them.
struct Problem {
  std::vector<D> inputs;
  std::function<D(const std::vector<D>&)> loss;
};

Problem make_problem(GradOp op, Rng& rng, std::uint64_t seed) {
  Problem p;
  switch (op) {
    case GradOp::conv2d: {
      const bool pointwise = seed % 3 == 2;
      const int stride = seed % 2 == 0 ? 1 : 2;
      const int k = pointwise ? 1 : 3;
      p.inputs = {random_tensor({2, 3, 5, 5}, rng), random_tensor({4, 3, k, k}, rng)};
      const int ho = (5 + 2 * ((k - 1) / 2) - k) / stride + 1;
      auto r = random_vec(static_cast<std::size_t>(2 * 4 * ho * ho), rng);
      p.loss = [r, stride](const std::vector<D>& in) { return project(conv2d(in[0], in[1], stride), r); };
      break;
    }
    case GradOp::transposed_conv2d: {
      const int k = seed % 2 == 0 ? 2 : 4;
      p.inputs = {random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, k, k}, rng)};
      auto r = random_vec(2 * 2 * 6 * 6, rng);
      p.loss = [r](const std::vector<D>& in) { return project(transposed_conv2d(in[0], in[1]), r); };
      break;
    }
    case GradOp::batchnorm2d: {
      p.inputs = {random_tensor({3, 4, 3, 3}, rng), random_tensor({4}, rng), random_tensor({4}, rng)};
      auto r = random_vec(3 * 4 * 3 * 3, rng);
      p.loss = [r](const std::vector<D>& in) {
        auto stats = BnStats<double>::fresh(4);
        return project(batchnorm2d(in[0], in[1], in[2], stats, BnMode::train), r);
      };
      break;
    }
    case GradOp::relu: {
      // Keep inputs away from the kink.
      D x = random_tensor({2, 3, 4, 4}, rng);
      for (auto& v : x.data()) v += v >= 0 ? 0.05 : -0.05;
      p.inputs = {x};
      auto r = random_vec(2 * 3 * 4 * 4, rng);
      p.loss = [r](const std::vector<D>& in) { return project(relu(in[0]), r); };
      break;
    }
    case GradOp::log_softmax: {
      p.inputs = {random_tensor({2, 4, 3, 3}, rng, 2.0)};
      auto r = random_vec(2 * 4 * 3 * 3, rng);
      p.loss = [r](const std::vector<D>& in) { return project(log_softmax(in[0]), r); };
      break;
    }
    case GradOp::cross_entropy: {
      p.inputs = {random_tensor({2, 4, 3, 3}, rng, 2.0)};
      std::vector<std::uint8_t> labels(2 * 3 * 3);
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 4));
      for (auto& l : labels) {
        if (l == 4) l = kIgnoreLabel;
      }
      labels[0] = 1;  // at least one counted pixel
      p.loss = [labels](const std::vector<D>& in) {
        return cross_entropy(in[0], std::span<const std::uint8_t>(labels)).loss;
      };
      break;
    }
    case GradOp::kl_div: {
      p.inputs = {random_tensor({2, 4, 3, 3}, rng, 2.0)};
      D teacher = random_tensor({2, 4, 3, 3}, rng, 2.0);
      p.loss = [teacher](const std::vector<D>& in) { return kl_div(in[0], teacher); };
      break;
    }
    case GradOp::dau_residual: {
      const std::int64_t c = 4;
      p.inputs = {random_tensor({2, c, 5, 5}, rng),        random_tensor({c, c, 3, 3}, rng, 0.3),
                  random_tensor({c, c, 3, 3}, rng, 0.3),   random_tensor({c, c, 1, 1}, rng, 0.3),
                  random_tensor({c, c, 1, 1}, rng, 0.3),   random_tensor({c}, rng),
                  random_tensor({c}, rng),                 random_tensor({c}, rng),
                  random_tensor({c}, rng)};
      auto r = random_vec(static_cast<std::size_t>(2 * c * 5 * 5), rng);
      p.loss = [r, c](const std::vector<D>& in) {
        BatchNormLayer<double> bn1{in[5], in[6], BnStats<double>::fresh(c)};
        BatchNormLayer<double> bn2{in[7], in[8], BnStats<double>::fresh(c)};
        DauPath<double> path{in[1], in[2], in[3], in[4], &bn1, &bn2};
        return project(dau_residual(in[0], path, BnMode::train, BnOptions{}), r);
      };
      break;
    }
    case GradOp::composite: {
      p.inputs = {random_tensor({2, 3, 4, 4}, rng), random_tensor({5, 3, 3, 3}, rng, 0.5),
                  random_tensor({5}, rng), random_tensor({5}, rng)};
      std::vector<std::uint8_t> labels(2 * 4 * 4);
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 4));
      p.loss = [labels](const std::vector<D>& in) {
        auto stats = BnStats<double>::fresh(5);
        auto h = relu(batchnorm2d(conv2d(in[0], in[1], 1), in[2], in[3], stats, BnMode::train));
        return cross_entropy(h, std::span<const std::uint8_t>(labels)).loss;
      };
      break;
    }
  }
  return p;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

const std::vector<GradOp>& all_grad_ops() {
  static const std::vector<GradOp> ops{GradOp::conv2d,      GradOp::transposed_conv2d,
                                       GradOp::batchnorm2d, GradOp::relu,
                                       GradOp::log_softmax, GradOp::cross_entropy,
                                       GradOp::kl_div,      GradOp::dau_residual,
                                       GradOp::composite};
  return ops;
}

std::string grad_op_name(GradOp op) {
  switch (op) {
    case GradOp::conv2d: return "conv2d";
    case GradOp::transposed_conv2d: return "transposed_conv2d";
    case GradOp::batchnorm2d: return "batchnorm2d";
    case GradOp::relu: return "relu";
    case GradOp::log_softmax: return "log_softmax";
    case GradOp::cross_entropy: return "cross_entropy";
    case GradOp::kl_div: return "kl_div";
    case GradOp::dau_residual: return "dau_residual";
    case GradOp::composite: return "conv_bn_relu_ce";
  }
  throw Error("unknown grad op");
}

GradCheckResult check_gradients(GradOp op, const GradCheckOptions& opts) {
  GradCheckResult res;
  res.op = op;
  res.seeds = opts.seeds;
  for (int s = 0; s < opts.seeds; ++s) {
    const std::uint64_t seed = opts.base_seed + static_cast<std::uint64_t>(s);
    Rng rng(seed, 77);
    Problem p = make_problem(op, rng, seed);
    for (auto& in : p.inputs) in.set_requires_grad(true);

    D loss = p.loss(p.inputs);
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const auto& in : p.inputs) {
      analytic.emplace_back(in.has_grad() ? std::vector<double>(in.grad().begin(), in.grad().end())
                                          : std::vector<double>(static_cast<std::size_t>(in.numel()), 0.0));
    }
    if (opts.inject_fault) {
      for (auto& g : analytic[0]) g *= 1.001;
    }

    NoGradGuard guard;
    for (std::size_t k = 0; k < p.inputs.size(); ++k) {
      auto data = p.inputs[k].data();
      std::vector<double> numeric(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double orig = data[i];
        data[i] = orig + opts.step;
        const double fp = p.loss(p.inputs).item();
        data[i] = orig - opts.step;
        const double fm = p.loss(p.inputs).item();
        data[i] = orig;
        numeric[i] = (fp - fm) / (2 * opts.step);
      }
      std::vector<double> diff(numeric.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[k][i] - numeric[i];
      const double denom = std::max({norm(analytic[k]), norm(numeric), 1e-12});
      const double err = norm(diff) / denom;
      if (err > res.max_error || s == 0) {
        if (err > res.max_error) res.worst_seed = seed;
        res.max_error = std::max(res.max_error, err);
      }
    }
  }
  res.pass = res.max_error <= opts.tolerance;
  return res;
}

}  // namespace mdil
