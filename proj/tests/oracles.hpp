#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of these call into the code they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "pptdetect/common.hpp"
#include "pptdetect/neuralcore.hpp"

namespace pptdetect::oracle {

/// Small random network mixing every layer kind, plus matching inputs.
struct GradCase {
  nn::Network net;
  std::vector<nn::Tensor> inputs;
  std::vector<int> targets;
  std::vector<double> weights;
};

inline GradCase random_grad_case(std::uint64_t seed) {
  Rng rng(seed);
  GradCase g;
  std::vector<nn::LayerSpec> specs;
  nn::Shape in;
  if (rng.below(3) != 0) {
    std::size_t channels = 1 + rng.below(3), length = 8 + rng.below(8);
    in = {channels, length};
    std::size_t out = 2 + rng.below(3), kernel = 2 + rng.below(3);
    specs.push_back(nn::LayerSpec::conv1d(channels, out, kernel));
    specs.push_back(nn::LayerSpec::relu());
    specs.push_back(nn::LayerSpec::maxpool1d(2, 2));
    if (rng.below(2)) {
      specs.push_back(nn::LayerSpec::conv1d(out, 2, 2));
      specs.push_back(nn::LayerSpec::relu());
    }
  } else {
    in = {3 + rng.below(5)};
  }
  specs.push_back(nn::LayerSpec::dense(0, 3 + rng.below(4)));
  specs.push_back(nn::LayerSpec::relu());
  specs.push_back(nn::LayerSpec::dense(0, 2));
  specs.push_back(nn::LayerSpec::softmax());
  g.net = nn::Network::build(in, specs, rng.next_u64());
  // Nonzero biases so ReLU units sit away from their kink.
  for (auto& layer : g.net.layers())
    for (double& b : layer.bias.values) b = rng.uniform(-0.3, 0.3);
  std::size_t batch = 2 + rng.below(4);
  for (std::size_t i = 0; i < batch; ++i) {
    nn::Tensor x(in);
    for (double& v : x.values) v = rng.uniform(-1.0, 1.0);
    g.inputs.push_back(x);
    g.targets.push_back(static_cast<int>(rng.below(2)));
  }
  g.weights = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
  return g;
}

/// Weighted mean cross-entropy recomputed from forward passes only.
inline double reference_loss(const nn::Network& net, const std::vector<nn::Tensor>& inputs,
                             const std::vector<int>& targets, const std::vector<double>& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    nn::Tensor p = net.forward(inputs[i]);
    total += weights[targets[i]] * -std::log(p.values[targets[i]]);
  }
  return total / static_cast<double>(inputs.size());
}

struct GradCheck {
  std::size_t compared = 0;
  std::size_t failures = 0;
  double worst_relative = 0.0;
};

/// Central differences with step h against loss_and_grad, for every parameter.
/// A component passes when the relative error is within rel or the absolute
/// error is within abs_floor (near-zero gradients).
inline GradCheck check_gradients(GradCase& g, double h = 1e-5, double rel = 1e-4, double abs_floor = 1e-6) {
  GradCheck out;
  auto analytic = nn::loss_and_grad(g.net, g.inputs, g.targets, g.weights);
  auto& layers = g.net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      nn::Tensor& param = which == 0 ? layers[l].weight : layers[l].bias;
      const nn::Tensor& grad = which == 0 ? analytic.grads.weight[l] : analytic.grads.bias[l];
      for (std::size_t k = 0; k < param.size(); ++k) {
        double saved = param.values[k];
        param.values[k] = saved + h;
        double up = reference_loss(g.net, g.inputs, g.targets, g.weights);
        param.values[k] = saved - h;
        double down = reference_loss(g.net, g.inputs, g.targets, g.weights);
        param.values[k] = saved;
        double numeric = (up - down) / (2 * h);
        double diff = std::abs(numeric - grad.values[k]);
        double scale = std::max(std::abs(numeric), std::abs(grad.values[k]));
        double relative = scale > 0 ? diff / scale : 0.0;
        ++out.compared;
        if (diff > abs_floor) out.worst_relative = std::max(out.worst_relative, relative);
        if (relative > rel && diff > abs_floor) ++out.failures;
      }
    }
  }
  return out;
}

struct BruteConfusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline BruteConfusion brute_confusion(const std::vector<bool>& pred, const std::vector<bool>& truth) {
  BruteConfusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++c.tp;
    else if (pred[i]) ++c.fp;
    else if (truth[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double brute_f1(const BruteConfusion& c) {
  double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * c.tp / denom;
}

inline double brute_accuracy(const BruteConfusion& c) {
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.tp + c.fp + c.fn + c.tn);
}

/// Solves s = a + lambda * (b - a) component-wise. Returns lambda when every
/// component with a usable difference agrees within tol and the components
/// where a == b match exactly.
inline std::optional<double> recover_lambda(const std::vector<double>& s, const std::vector<double>& a,
                                            const std::vector<double>& b, double tol = 1e-9) {
  std::optional<double> lambda;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double d = b[i] - a[i];
    if (std::abs(d) < 1e-12) {
      if (std::abs(s[i] - a[i]) > tol) return std::nullopt;
      continue;
    }
    double l = (s[i] - a[i]) / d;
    if (!lambda) lambda = l;
    else if (std::abs(*lambda - l) > tol) return std::nullopt;
  }
  if (!lambda) lambda = 0.0;
  if (*lambda < -tol || *lambda > 1 + tol) return std::nullopt;
  return lambda;
}

/// Indices of the k nearest points to points[i] by squared distance, ties by index.
inline std::vector<std::size_t> brute_knn(const std::vector<std::vector<double>>& points, std::size_t i,
                                          std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (j == i) continue;
    double s = 0;
    for (std::size_t c = 0; c < points[i].size(); ++c) s += (points[i][c] - points[j][c]) * (points[i][c] - points[j][c]);
    d.push_back({s, j});
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < k && j < d.size(); ++j) out.push_back(d[j].second);
  return out;
}

/// Euclidean distance of the two group means, computed naively.
inline double brute_centroid_euclidean(const std::vector<std::vector<double>>& a,
                                       const std::vector<std::vector<double>>& b) {
  double s = 0;
  for (std::size_t c = 0; c < a[0].size(); ++c) {
    double ma = 0, mb = 0;
    for (const auto& v : a) ma += v[c];
    for (const auto& v : b) mb += v[c];
    ma /= a.size();
    mb /= b.size();
    s += (ma - mb) * (ma - mb);
  }
  return std::sqrt(s);
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

}  // namespace pptdetect::oracle
