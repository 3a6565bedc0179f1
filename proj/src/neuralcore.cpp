#include "pptdetect/neuralcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pptdetect/metrics.hpp"

namespace pptdetect::nn {

using nlohmann::json;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
  return out + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), values(shape_size(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != shape_size(shape)) {
    throw ValidationError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) +
                          " values");
  }
}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv1d: return "CONV1D";
    case LayerKind::kMaxPool1d: return "MAXPOOL1D";
    case LayerKind::kDense: return "DENSE";
    case LayerKind::kRelu: return "RELU";
    case LayerKind::kSoftmax: return "SOFTMAX";
  }
  return "?";
}

namespace {

LayerKind parse_kind(std::string_view s) {
  for (auto k : {LayerKind::kConv1d, LayerKind::kMaxPool1d, LayerKind::kDense, LayerKind::kRelu, LayerKind::kSoftmax}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown layer kind '" + std::string(s) + "'");
}

}  // namespace

LayerSpec LayerSpec::conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
  LayerSpec s;
  s.kind = LayerKind::kConv1d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::maxpool1d(std::size_t width, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool1d;
  s.pool_width = width;
  s.pool_stride = stride;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t fan_in, std::size_t fan_out) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.fan_in = fan_in;
  s.fan_out = fan_out;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  return s;
}

namespace {

// Resolves the output shape of one layer, filling inferred fields in spec.
Shape resolve_layer(LayerSpec& spec, const Shape& in, std::size_t index, bool last) {
  auto fail = [&](const std::string& why) -> Shape {
    throw ValidationError("layer " + std::to_string(index) + " (" + std::string(to_string(spec.kind)) +
                          "): " + why + "; input shape " + shape_string(in));
  };
  switch (spec.kind) {
    case LayerKind::kConv1d:
      if (in.size() != 2) return fail("expects a [channels, length] input");
      if (spec.in_channels == 0) spec.in_channels = in[0];
      if (in[0] != spec.in_channels) return fail("expects " + std::to_string(spec.in_channels) + " channels");
      if (spec.kernel == 0 || spec.out_channels == 0) return fail("kernel and channel counts must be positive");
      if (in[1] < spec.kernel) return fail("input shorter than kernel width " + std::to_string(spec.kernel));
      return {spec.out_channels, in[1] - spec.kernel + 1};
    case LayerKind::kMaxPool1d:
      if (in.size() != 2) return fail("expects a [channels, length] input");
      if (spec.pool_width == 0 || spec.pool_stride == 0) return fail("pool width and stride must be positive");
      if (in[1] < spec.pool_width) return fail("input shorter than pool width " + std::to_string(spec.pool_width));
      return {in[0], (in[1] - spec.pool_width) / spec.pool_stride + 1};
    case LayerKind::kDense:
      if (spec.fan_in == 0) spec.fan_in = shape_size(in);
      if (shape_size(in) != spec.fan_in) return fail("expects " + std::to_string(spec.fan_in) + " inputs");
      if (spec.fan_out == 0) return fail("fan_out must be positive");
      return {spec.fan_out};
    case LayerKind::kRelu:
      return in;
    case LayerKind::kSoftmax:
      if (!last) return fail("softmax is only supported as the final layer");
      if (in.size() != 1) return fail("expects a flat vector");
      return in;
  }
  return in;
}

void init_uniform(Tensor& t, double limit, Rng& rng) {
  for (auto& v : t.values) v = rng.uniform(-limit, limit);
}

}  // namespace

Network Network::build(const Shape& input_shape, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  if (specs.empty()) throw ValidationError("network needs at least one layer");
  Network net;
  net.input_shape_ = input_shape;
  Rng rng(derive_seed(seed, "nn-init"));
  Shape cur = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer;
    layer.spec = specs[i];
    layer.in_shape = cur;
    layer.out_shape = resolve_layer(layer.spec, cur, i, i + 1 == specs.size());
    bool relu_next = i + 1 < specs.size() && specs[i + 1].kind == LayerKind::kRelu;
    if (layer.spec.kind == LayerKind::kConv1d) {
      const auto& s = layer.spec;
      layer.weight = Tensor({s.in_channels, s.kernel, s.out_channels});
      layer.bias = Tensor({s.out_channels});
      double fan_in = static_cast<double>(s.in_channels * s.kernel);
      double fan_out = static_cast<double>(s.out_channels * s.kernel);
      init_uniform(layer.weight, relu_next ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out)), rng);
    } else if (layer.spec.kind == LayerKind::kDense) {
      const auto& s = layer.spec;
      layer.weight = Tensor({s.fan_out, s.fan_in});
      layer.bias = Tensor({s.fan_out});
      double fan_in = static_cast<double>(s.fan_in);
      double fan_out = static_cast<double>(s.fan_out);
      init_uniform(layer.weight, relu_next ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out)), rng);
    }
    cur = layer.out_shape;
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

Network Network::from_layers(const Shape& input_shape, std::vector<Layer> layers) {
  if (layers.empty()) throw ValidationError("network needs at least one layer");
  Network net;
  net.input_shape_ = input_shape;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Layer& layer = layers[i];
    layer.in_shape = cur;
    layer.out_shape = resolve_layer(layer.spec, cur, i, i + 1 == layers.size());
    const auto& s = layer.spec;
    Shape want_w, want_b;
    if (s.kind == LayerKind::kConv1d) {
      want_w = {s.in_channels, s.kernel, s.out_channels};
      want_b = {s.out_channels};
    } else if (s.kind == LayerKind::kDense) {
      want_w = {s.fan_out, s.fan_in};
      want_b = {s.fan_out};
    }
    if (layer.has_parameters() && (layer.weight.shape != want_w || layer.bias.shape != want_b ||
                                   layer.weight.size() != shape_size(want_w) || layer.bias.size() != shape_size(want_b))) {
      throw ValidationError("layer " + std::to_string(i) + ": parameter shapes " + shape_string(layer.weight.shape) +
                            "/" + shape_string(layer.bias.shape) + " do not match " + shape_string(want_w) + "/" +
                            shape_string(want_b));
    }
    cur = layer.out_shape;
  }
  net.layers_ = std::move(layers);
  return net;
}

Shape Network::output_shape() const { return layers_.empty() ? input_shape_ : layers_.back().out_shape; }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Network::zero_parameters() {
  for (auto& l : layers_) {
    std::fill(l.weight.values.begin(), l.weight.values.end(), 0.0);
    std::fill(l.bias.values.begin(), l.bias.values.end(), 0.0);
  }
}

namespace {

Tensor conv_forward(const Layer& l, const Tensor& x) {
  const std::size_t cin = l.spec.in_channels, k = l.spec.kernel, cout = l.spec.out_channels;
  const std::size_t len = x.shape[1], lout = l.out_shape[1];
  // Accumulate in [lout, cout] so the innermost loop is contiguous, skipping zero inputs.
  std::vector<double> acc(lout * cout, 0.0);
  for (std::size_t t = 0; t < lout; ++t) {
    std::copy(l.bias.values.begin(), l.bias.values.end(), acc.begin() + static_cast<std::ptrdiff_t>(t * cout));
  }
  for (std::size_t c = 0; c < cin; ++c) {
    const double* xrow = x.values.data() + c * len;
    for (std::size_t ti = 0; ti < len; ++ti) {
      const double v = xrow[ti];
      if (v == 0.0) continue;
      const std::size_t kmin = ti >= lout ? ti - lout + 1 : 0;
      const std::size_t kmax = std::min(k, ti + 1);
      for (std::size_t kk = kmin; kk < kmax; ++kk) {
        const std::size_t t = ti - kk;
        const double* w = l.weight.values.data() + (c * k + kk) * cout;
        double* a = acc.data() + t * cout;
        for (std::size_t o = 0; o < cout; ++o) a[o] += w[o] * v;
      }
    }
  }
  Tensor y({cout, lout});
  for (std::size_t t = 0; t < lout; ++t)
    for (std::size_t o = 0; o < cout; ++o) y.values[o * lout + t] = acc[t * cout + o];
  return y;
}

Tensor pool_forward(const Layer& l, const Tensor& x, std::vector<std::size_t>* argmax) {
  const std::size_t ch = x.shape[0], len = x.shape[1], lout = l.out_shape[1];
  const std::size_t w = l.spec.pool_width, s = l.spec.pool_stride;
  Tensor y({ch, lout});
  if (argmax) argmax->assign(ch * lout, 0);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t t = 0; t < lout; ++t) {
      std::size_t best = c * len + t * s;
      for (std::size_t j = 1; j < w; ++j) {
        std::size_t idx = c * len + t * s + j;
        if (x.values[idx] > x.values[best]) best = idx;
      }
      y.values[c * lout + t] = x.values[best];
      if (argmax) (*argmax)[c * lout + t] = best;
    }
  }
  return y;
}

Tensor dense_forward(const Layer& l, const Tensor& x) {
  const std::size_t in = l.spec.fan_in, out = l.spec.fan_out;
  Tensor y({out}, l.bias.values);
  for (std::size_t o = 0; o < out; ++o) {
    const double* w = l.weight.values.data() + o * in;
    double sum = 0.0;
    for (std::size_t i = 0; i < in; ++i) sum += w[i] * x.values[i];
    y.values[o] += sum;
  }
  return y;
}

Tensor softmax_forward(const Tensor& x) {
  Tensor y(x.shape);
  double m = *std::max_element(x.values.begin(), x.values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y.values[i] = std::exp(x.values[i] - m);
    sum += y.values[i];
  }
  for (auto& v : y.values) v /= sum;
  return y;
}

Tensor layer_forward(const Layer& l, const Tensor& x, std::vector<std::size_t>* argmax) {
  switch (l.spec.kind) {
    case LayerKind::kConv1d: return conv_forward(l, x);
    case LayerKind::kMaxPool1d: return pool_forward(l, x, argmax);
    case LayerKind::kDense: return dense_forward(l, x);
    case LayerKind::kRelu: {
      Tensor y = x;
      for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case LayerKind::kSoftmax: return softmax_forward(x);
  }
  return x;
}

void check_input(const Network& net, const Tensor& input) {
  if (input.shape != net.input_shape() || input.size() != shape_size(net.input_shape())) {
    throw ValidationError("layer 0 (" + std::string(to_string(net.layers().front().spec.kind)) +
                          "): input shape " + shape_string(input.shape) + " does not match expected " +
                          shape_string(net.input_shape()));
  }
}

}  // namespace

Tensor Network::forward(const Tensor& input) const {
  check_input(*this, input);
  Tensor cur = input;
  for (const auto& l : layers_) cur = layer_forward(l, cur, nullptr);
  return cur;
}

ForwardTrace Network::forward_trace(const Tensor& input) const {
  check_input(*this, input);
  ForwardTrace trace;
  trace.inputs.reserve(layers_.size());
  trace.pool_argmax.resize(layers_.size());
  Tensor cur = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    trace.inputs.push_back(cur);
    cur = layer_forward(layers_[i], cur, &trace.pool_argmax[i]);
  }
  trace.output = std::move(cur);
  return trace;
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.weight.emplace_back(l.weight.shape);
    g.bias.emplace_back(l.bias.shape);
  }
  return g;
}

namespace {

// Backpropagates dy through layer i, accumulating parameter gradients.
// Returns dx unless need_dx is false.
Tensor layer_backward(const Layer& l, const Tensor& x, const std::vector<std::size_t>& argmax, const Tensor& dy,
                      Tensor& gw, Tensor& gb, bool need_dx) {
  switch (l.spec.kind) {
    case LayerKind::kConv1d: {
      const std::size_t cin = l.spec.in_channels, k = l.spec.kernel, cout = l.spec.out_channels;
      const std::size_t len = x.shape[1], lout = l.out_shape[1];
      std::vector<double> dyt(lout * cout);
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t t = 0; t < lout; ++t) {
          dyt[t * cout + o] = dy.values[o * lout + t];
          gb.values[o] += dy.values[o * lout + t];
        }
      Tensor dx;
      if (need_dx) dx = Tensor(x.shape);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t ti = 0; ti < len; ++ti) {
          const double v = x.values[c * len + ti];
          if (v == 0.0 && !need_dx) continue;
          const std::size_t kmin = ti >= lout ? ti - lout + 1 : 0;
          const std::size_t kmax = std::min(k, ti + 1);
          double dxv = 0.0;
          for (std::size_t kk = kmin; kk < kmax; ++kk) {
            const std::size_t t = ti - kk;
            const double* d = dyt.data() + t * cout;
            const std::size_t base = (c * k + kk) * cout;
            if (v != 0.0) {
              double* g = gw.values.data() + base;
              for (std::size_t o = 0; o < cout; ++o) g[o] += v * d[o];
            }
            if (need_dx) {
              const double* w = l.weight.values.data() + base;
              for (std::size_t o = 0; o < cout; ++o) dxv += w[o] * d[o];
            }
          }
          if (need_dx) dx.values[c * len + ti] = dxv;
        }
      }
      return dx;
    }
    case LayerKind::kMaxPool1d: {
      Tensor dx(x.shape);
      for (std::size_t i = 0; i < dy.size(); ++i) dx.values[argmax[i]] += dy.values[i];
      return dx;
    }
    case LayerKind::kDense: {
      const std::size_t in = l.spec.fan_in, out = l.spec.fan_out;
      Tensor dx;
      if (need_dx) dx = Tensor(x.shape);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = dy.values[o];
        gb.values[o] += d;
        if (d == 0.0) continue;
        double* g = gw.values.data() + o * in;
        const double* w = l.weight.values.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          g[i] += d * x.values[i];
          if (need_dx) dx.values[i] += d * w[i];
        }
      }
      return dx;
    }
    case LayerKind::kRelu: {
      Tensor dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x.values[i] > 0.0)) dx.values[i] = 0.0;
      dx.shape = x.shape;
      return dx;
    }
    case LayerKind::kSoftmax:
      // Handled jointly with the cross-entropy loss.
      break;
  }
  return dy;
}

}  // namespace

LossResult loss_and_grad(const Network& net, std::span<const Tensor> inputs, std::span<const int> targets,
                         std::span<const double> class_weights) {
  if (net.layers().empty() || net.layers().back().spec.kind != LayerKind::kSoftmax) {
    throw ValidationError("loss_and_grad requires a final SOFTMAX layer");
  }
  if (inputs.size() != targets.size() || inputs.empty()) {
    throw ValidationError("loss_and_grad: " + std::to_string(inputs.size()) + " inputs for " +
                          std::to_string(targets.size()) + " targets");
  }
  const std::size_t n_classes = net.output_shape()[0];
  if (class_weights.size() != n_classes) throw ValidationError("one class weight per output unit required");
  for (double w : class_weights)
    if (!(w > 0.0)) throw ValidationError("class weights must be positive");

  LossResult result;
  result.grads = zero_gradients(net);
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  const std::size_t last = net.layers().size() - 1;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const int y = targets[s];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw ValidationError("target class out of range");
    ForwardTrace trace = net.forward_trace(inputs[s]);
    const Tensor& p = trace.output;
    const double w = class_weights[static_cast<std::size_t>(y)];
    result.loss += -w * std::log(p.values[static_cast<std::size_t>(y)]) * inv_n;
    // d(loss)/d(logits) for softmax + cross-entropy.
    Tensor delta = p;
    delta.values[static_cast<std::size_t>(y)] -= 1.0;
    for (auto& v : delta.values) v *= w * inv_n;
    for (std::size_t i = last; i-- > 0;) {
      delta = layer_backward(net.layers()[i], trace.inputs[i], trace.pool_argmax[i], delta, result.grads.weight[i],
                             result.grads.bias[i], i > 0);
    }
  }
  if (!std::isfinite(result.loss)) throw NonFiniteLoss("non-finite loss");
  return result;
}

OptimizerState make_optimizer(const Network& net, Algorithm algorithm, double learning_rate) {
  OptimizerState st;
  st.algorithm = algorithm;
  st.learning_rate = learning_rate;
  for (const auto& l : net.layers()) {
    st.m_weight.emplace_back(l.weight.shape);
    st.v_weight.emplace_back(l.weight.shape);
    st.m_bias.emplace_back(l.bias.shape);
    st.v_bias.emplace_back(l.bias.shape);
  }
  return st;
}

void optimizer_step(Network& net, const Gradients& grads, OptimizerState& st) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size()) {
    throw ValidationError("optimizer_step: gradient layer count mismatch");
  }
  if (st.algorithm == Algorithm::kAdam && st.m_weight.size() != layers.size()) {
    throw ValidationError("optimizer_step: optimizer state does not match network");
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  auto update = [&](Tensor& p, const Tensor& g, Tensor* m, Tensor* v, std::size_t layer) {
    if (g.size() != p.size()) {
      throw ValidationError("optimizer_step: gradient shape mismatch at layer " + std::to_string(layer));
    }
    if (st.algorithm == Algorithm::kSgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p.values[i] -= st.learning_rate * g.values[i];
      return;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.values[i];
      m->values[i] = st.beta1 * m->values[i] + (1.0 - st.beta1) * gi;
      v->values[i] = st.beta2 * v->values[i] + (1.0 - st.beta2) * gi * gi;
      const double mhat = m->values[i] / c1;
      const double vhat = v->values[i] / c2;
      p.values[i] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
    }
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].has_parameters()) continue;
    bool adam = st.algorithm == Algorithm::kAdam;
    update(layers[i].weight, grads.weight[i], adam ? &st.m_weight[i] : nullptr, adam ? &st.v_weight[i] : nullptr, i);
    update(layers[i].bias, grads.bias[i], adam ? &st.m_bias[i] : nullptr, adam ? &st.v_bias[i] : nullptr, i);
  }
}

json serialize_model(const Network& net, const OptimizerState* optimizer) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["input_shape"] = net.input_shape();
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json j;
    j["kind"] = to_string(l.spec.kind);
    switch (l.spec.kind) {
      case LayerKind::kConv1d:
        j["in_channels"] = l.spec.in_channels;
        j["out_channels"] = l.spec.out_channels;
        j["kernel"] = l.spec.kernel;
        break;
      case LayerKind::kMaxPool1d:
        j["pool_width"] = l.spec.pool_width;
        j["pool_stride"] = l.spec.pool_stride;
        break;
      case LayerKind::kDense:
        j["fan_in"] = l.spec.fan_in;
        j["fan_out"] = l.spec.fan_out;
        break;
      default:
        break;
    }
    if (l.has_parameters()) {
      j["weight"] = l.weight.values;
      j["bias"] = l.bias.values;
    }
    layers.push_back(std::move(j));
  }
  doc["layers"] = std::move(layers);
  if (optimizer) {
    json o;
    o["algorithm"] = optimizer->algorithm == Algorithm::kAdam ? "ADAM" : "SGD";
    o["learning_rate"] = optimizer->learning_rate;
    o["beta1"] = optimizer->beta1;
    o["beta2"] = optimizer->beta2;
    o["epsilon"] = optimizer->epsilon;
    o["step"] = optimizer->step;
    doc["optimizer"] = std::move(o);
  }
  return doc;
}

Network deserialize_model(const json& doc) {
  try {
    if (!doc.is_object()) throw ParseError("model document must be a JSON object");
    if (!doc.contains("format_version") || doc["format_version"] != kModelFormatVersion) {
      throw ParseError("model format_version mismatch: expected " + std::to_string(kModelFormatVersion));
    }
    Shape input = doc.at("input_shape").get<Shape>();
    std::vector<Layer> layers;
    for (const auto& j : doc.at("layers")) {
      Layer l;
      l.spec.kind = parse_kind(j.at("kind").get<std::string>());
      switch (l.spec.kind) {
        case LayerKind::kConv1d:
          l.spec.in_channels = j.at("in_channels").get<std::size_t>();
          l.spec.out_channels = j.at("out_channels").get<std::size_t>();
          l.spec.kernel = j.at("kernel").get<std::size_t>();
          l.weight = Tensor({l.spec.in_channels, l.spec.kernel, l.spec.out_channels}, j.at("weight").get<std::vector<double>>());
          l.bias = Tensor({l.spec.out_channels}, j.at("bias").get<std::vector<double>>());
          break;
        case LayerKind::kMaxPool1d:
          l.spec.pool_width = j.at("pool_width").get<std::size_t>();
          l.spec.pool_stride = j.at("pool_stride").get<std::size_t>();
          break;
        case LayerKind::kDense:
          l.spec.fan_in = j.at("fan_in").get<std::size_t>();
          l.spec.fan_out = j.at("fan_out").get<std::size_t>();
          l.weight = Tensor({l.spec.fan_out, l.spec.fan_in}, j.at("weight").get<std::vector<double>>());
          l.bias = Tensor({l.spec.fan_out}, j.at("bias").get<std::vector<double>>());
          break;
        default:
          break;
      }
      layers.push_back(std::move(l));
    }
    return Network::from_layers(input, std::move(layers));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("malformed model document: ") + e.what());
  }
}

std::string dump_canonical(const json& doc) { return doc.dump(1, ' ', false, json::error_handler_t::strict) + "\n"; }

json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("document parse error: ") + e.what());
  }
}

json TrainConfig::to_json() const {
  return json{{"algorithm", algorithm == Algorithm::kAdam ? "ADAM" : "SGD"},
              {"learning_rate", learning_rate},
              {"beta1", beta1},
              {"beta2", beta2},
              {"epsilon", epsilon},
              {"batch_size", batch_size},
              {"max_epochs", max_epochs},
              {"patience", patience},
              {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  if (j.contains("algorithm")) {
    auto a = j["algorithm"].get<std::string>();
    if (a == "ADAM" || a == "adam") c.algorithm = Algorithm::kAdam;
    else if (a == "SGD" || a == "sgd") c.algorithm = Algorithm::kSgd;
    else throw ValidationError("unknown optimizer '" + a + "'");
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (c.batch_size == 0 || c.max_epochs == 0) throw ValidationError("batch_size and max_epochs must be positive");
  return c;
}

namespace {

struct ValScore {
  double f1 = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
};

ValScore score_validation(const Network& net, const std::vector<Tensor>& xs, const std::vector<int>& ys) {
  std::vector<bool> pred(xs.size()), actual(xs.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Tensor p = net.forward(xs[i]);
    // Class 0 is the positive class; a tie resolves to it.
    pred[i] = p.values[0] >= p.values[1];
    actual[i] = ys[i] == 0;
    loss -= std::log(std::max(p.values[static_cast<std::size_t>(ys[i])], 1e-300));
  }
  auto m = eval::metrics_from(eval::confusion(pred, actual));
  return {m.f1, m.accuracy, xs.empty() ? 0.0 : loss / static_cast<double>(xs.size())};
}

}  // namespace

TrainResult fit(Network initial, const std::vector<Tensor>& train_x, const std::vector<int>& train_y,
                const std::vector<Tensor>& val_x, const std::vector<int>& val_y,
                const std::vector<double>& class_weights, const TrainConfig& config) {
  if (train_x.empty() || train_x.size() != train_y.size()) throw ValidationError("fit: empty or inconsistent training set");
  if (val_x.size() != val_y.size()) throw ValidationError("fit: inconsistent validation set");
  const auto& vx = val_x.empty() ? train_x : val_x;
  const auto& vy = val_x.empty() ? train_y : val_y;

  TrainResult result;
  Network net = std::move(initial);
  OptimizerState opt = make_optimizer(net, config.algorithm, config.learning_rate);
  opt.beta1 = config.beta1;
  opt.beta2 = config.beta2;
  opt.epsilon = config.epsilon;
  Rng rng(derive_seed(config.seed, "fit-shuffle"));

  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);
  double best_f1 = -1.0, best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  result.best = net;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> bx;
      std::vector<int> by;
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(train_x[order[i]]);
        by.push_back(train_y[order[i]]);
      }
      LossResult lr;
      try {
        lr = loss_and_grad(net, bx, by, class_weights);
      } catch (const NonFiniteLoss&) {
        throw NonFiniteLoss("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      epoch_loss += lr.loss * static_cast<double>(end - start);
      optimizer_step(net, lr.grads, opt);
    }
    ValScore v = score_validation(net, vx, vy);
    result.history.push_back({epoch, epoch_loss / static_cast<double>(order.size()), v.loss, v.f1, v.accuracy});
    if (v.f1 > best_f1 || (v.f1 == best_f1 && v.loss < best_loss)) {
      best_f1 = v.f1;
      best_loss = v.loss;
      result.best = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.best_val_f1 = best_f1;
  return result;
}

}  // namespace pptdetect::nn
