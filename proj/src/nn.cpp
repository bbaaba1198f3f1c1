#include "sfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sfl/error.hpp"
#include "sfl/rng.hpp"

namespace sfl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string pair_name(const ModelSpec& spec, std::size_t i) {
  std::string prev = i == 0 ? std::string("input") : "layer " + std::to_string(i - 1) + " (" +
                                                       layer_name(spec.layers[i - 1]) + ")";
  return prev + " -> layer " + std::to_string(i) + " (" + layer_name(spec.layers[i]) + ")";
}

Shape output_shape(const ModelSpec& spec, std::size_t i, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw ShapeError("shape mismatch at " + pair_name(spec, i) + ": " + why + ", input " +
                     shape_str(in));
  };
  return std::visit(
      overloaded{
          [&](const Dense& d) -> Shape {
            if (d.in_features == 0 || d.out_features == 0) return fail("zero-sized dense layer");
            if (in.size() != 1 || in[0] != d.in_features)
              return fail("dense expects (" + std::to_string(d.in_features) + ")");
            return {d.out_features};
          },
          [&](const Conv2d& c) -> Shape {
            if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0)
              return fail("zero-sized conv layer");
            if (in.size() != 3 || in[0] != c.in_channels)
              return fail("conv expects (" + std::to_string(c.in_channels) + ",H,W)");
            if (in[1] + 2 * c.padding < c.kernel || in[2] + 2 * c.padding < c.kernel)
              return fail("kernel larger than padded input");
            return {c.out_channels, (in[1] + 2 * c.padding - c.kernel) / c.stride + 1,
                    (in[2] + 2 * c.padding - c.kernel) / c.stride + 1};
          },
          [&](const MaxPool2d& p) -> Shape {
            if (p.window == 0) return fail("zero pooling window");
            if (in.size() != 3 || in[1] < p.window || in[2] < p.window)
              return fail("maxpool expects (C,H,W) with H,W >= window");
            return {in[0], in[1] / p.window, in[2] / p.window};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
      },
      spec.layers[i]);
}

// ---- per-layer kernels. All reductions run in ascending index order. ----

TensorF dense_forward(const Dense& d, const double* w, const double* b, const TensorF& x) {
  const std::size_t batch = x.batch();
  TensorF y({batch, d.out_features});
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = &x.values[n * d.in_features];
    for (std::size_t o = 0; o < d.out_features; ++o) {
      const double* wr = w + o * d.in_features;
      double acc = 0.0;
      for (std::size_t i = 0; i < d.in_features; ++i) acc += wr[i] * xr[i];
      y.values[n * d.out_features + o] = acc + b[o];
    }
  }
  return y;
}

void dense_backward(const Dense& d, const double* w, const TensorF& x, const TensorF& dy,
                    double* dw, double* db, TensorF& dx) {
  const std::size_t batch = x.batch();
  for (std::size_t o = 0; o < d.out_features; ++o) {
    for (std::size_t i = 0; i < d.in_features; ++i) {
      double acc = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        acc += dy.values[n * d.out_features + o] * x.values[n * d.in_features + i];
      dw[o * d.in_features + i] = acc;
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < batch; ++n) acc += dy.values[n * d.out_features + o];
    db[o] = acc;
  }
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t i = 0; i < d.in_features; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d.out_features; ++o)
        acc += w[o * d.in_features + i] * dy.values[n * d.out_features + o];
      dx.values[n * d.in_features + i] = acc;
    }
  }
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, oh, ow, k, stride, pad;
};

ConvGeom conv_geom(const Conv2d& c, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], in[3], c.out_channels, out[2], out[3], c.kernel, c.stride, c.padding};
}

TensorF conv_forward(const Conv2d& c, const double* w, const double* b, const TensorF& x,
                     const Shape& out_sample) {
  TensorF y({x.batch(), out_sample[0], out_sample[1], out_sample[2]});
  const ConvGeom g = conv_geom(c, x.shape, y.shape);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.cout; ++o)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
              if (iy < 0 || iy >= std::ptrdiff_t(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
                if (ix < 0 || ix >= std::ptrdiff_t(g.w)) continue;
                acc += w[((o * g.cin + ci) * g.k + ky) * g.k + kx] *
                       x.values[((n * g.cin + ci) * g.h + iy) * g.w + ix];
              }
            }
          y.values[((n * g.cout + o) * g.oh + oy) * g.ow + ox] = acc + b[o];
        }
  return y;
}

void conv_backward(const Conv2d& c, const double* w, const TensorF& x, const TensorF& dy, double* dw,
                   double* db, TensorF& dx) {
  const ConvGeom g = conv_geom(c, x.shape, dy.shape);
  auto dy_at = [&](std::size_t n, std::size_t o, std::size_t oy, std::size_t ox) {
    return dy.values[((n * g.cout + o) * g.oh + oy) * g.ow + ox];
  };
  for (std::size_t o = 0; o < g.cout; ++o) {
    for (std::size_t ci = 0; ci < g.cin; ++ci)
      for (std::size_t ky = 0; ky < g.k; ++ky)
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          double acc = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
              if (iy < 0 || iy >= std::ptrdiff_t(g.h)) continue;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
                if (ix < 0 || ix >= std::ptrdiff_t(g.w)) continue;
                acc += dy_at(n, o, oy, ox) * x.values[((n * g.cin + ci) * g.h + iy) * g.w + ix];
              }
            }
          dw[((o * g.cin + ci) * g.k + ky) * g.k + kx] = acc;
        }
    double acc = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) acc += dy_at(n, o, oy, ox);
    db[o] = acc;
  }
  // Scatter in a fixed loop order so the result is reproducible.
  std::fill(dx.values.begin(), dx.values.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.cout; ++o)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double gy = dy_at(n, o, oy, ox);
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
              if (iy < 0 || iy >= std::ptrdiff_t(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
                if (ix < 0 || ix >= std::ptrdiff_t(g.w)) continue;
                dx.values[((n * g.cin + ci) * g.h + iy) * g.w + ix] +=
                    w[((o * g.cin + ci) * g.k + ky) * g.k + kx] * gy;
              }
            }
        }
}

// Index (into x.values) of the first row-major maximum of each pooling window.
std::vector<std::size_t> pool_argmax(const MaxPool2d& p, const TensorF& x, const Shape& out) {
  const std::size_t batch = x.batch(), ch = x.shape[1], h = x.shape[2], w = x.shape[3];
  const std::size_t oh = out[1], ow = out[2];
  std::vector<std::size_t> idx(batch * ch * oh * ow);
  std::size_t k = 0;
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = ((n * ch + c) * h + oy * p.window) * w + ox * p.window;
          for (std::size_t dy = 0; dy < p.window; ++dy)
            for (std::size_t dx = 0; dx < p.window; ++dx) {
              const std::size_t at = ((n * ch + c) * h + oy * p.window + dy) * w + ox * p.window + dx;
              if (x.values[at] > x.values[best]) best = at;
            }
          idx[k++] = best;
        }
  return idx;
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
  const ParamLayout layout = make_layout(spec);
  if (!(params.layout == layout) || params.values.size() != layout.total) {
    throw ShapeError("parameter vector layout does not match model (" +
                     std::to_string(params.values.size()) + " values, model needs " +
                     std::to_string(layout.total) + ")");
  }
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(
      overloaded{
          [](const Dense& d) {
            return "Dense(" + std::to_string(d.in_features) + "," + std::to_string(d.out_features) + ")";
          },
          [](const Conv2d& c) {
            return "Conv2d(" + std::to_string(c.in_channels) + "," + std::to_string(c.out_channels) +
                   ",k" + std::to_string(c.kernel) + ",s" + std::to_string(c.stride) + ",p" +
                   std::to_string(c.padding) + ")";
          },
          [](const MaxPool2d& p) { return "MaxPool2d(" + std::to_string(p.window) + ")"; },
          [](const ReLU&) { return std::string("ReLU"); },
          [](const Flatten&) { return std::string("Flatten"); },
      },
      layer);
}

std::vector<Shape> infer_shapes(const ModelSpec& spec) {
  if (spec.input_shape.empty() || shape_size(spec.input_shape) == 0)
    throw ShapeError("model input shape " + shape_str(spec.input_shape) + " is empty");
  std::vector<Shape> shapes{spec.input_shape};
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    shapes.push_back(output_shape(spec, i, shapes.back()));
  return shapes;
}

void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ShapeError("model has no layers");
  const auto shapes = infer_shapes(spec);
  if (spec.num_classes > 0) {
    const Shape& out = shapes.back();
    if (out.size() != 1 || out[0] != spec.num_classes)
      throw ShapeError("final layer output " + shape_str(out) + " does not match num_classes " +
                       std::to_string(spec.num_classes));
  }
  const std::size_t L = spec.layers.size();
  for (const auto& [name, cut] : spec.cut_presets) {
    if (cut < 1 || cut > L - 1)
      throw ShapeError("cut preset " + name + "=" + std::to_string(cut) + " outside [1, " +
                       std::to_string(L - 1) + "]");
  }
  const auto& p = spec.cut_presets;
  if (p.count("v1") && p.count("v2") && !(p.at("v1") < p.at("v2")))
    throw ShapeError("cut presets must satisfy v1 < v2");
  if (p.count("v2") && p.count("v3") && !(p.at("v2") < p.at("v3")))
    throw ShapeError("cut presets must satisfy v2 < v3");
}

ParamLayout make_layout(const ModelSpec& spec) {
  ParamLayout layout;
  for (const auto& layer : spec.layers) {
    LayerSlot slot;
    slot.offset = layout.total;
    if (const auto* d = std::get_if<Dense>(&layer)) {
      slot.weight_shape = {d->out_features, d->in_features};
      slot.weight_count = d->out_features * d->in_features;
      slot.bias_count = d->out_features;
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      slot.weight_shape = {c->out_channels, c->in_channels, c->kernel, c->kernel};
      slot.weight_count = shape_size(slot.weight_shape);
      slot.bias_count = c->out_channels;
    }
    layout.total += slot.size();
    layout.slots.push_back(std::move(slot));
  }
  return layout;
}

std::vector<LayerParams> unflatten(const ParamVector& params) {
  std::vector<LayerParams> out;
  out.reserve(params.layout.slots.size());
  for (const auto& slot : params.layout.slots) {
    if (slot.offset + slot.size() > params.values.size())
      throw ShapeError("parameter vector shorter than its layout");
    const auto first = params.values.begin() + std::ptrdiff_t(slot.offset);
    LayerParams lp;
    if (slot.size() > 0) {
      lp.weights = TensorF(slot.weight_shape, {first, first + std::ptrdiff_t(slot.weight_count)});
      lp.bias = TensorF({slot.bias_count}, {first + std::ptrdiff_t(slot.weight_count),
                                            first + std::ptrdiff_t(slot.size())});
    }
    out.push_back(std::move(lp));
  }
  return out;
}

ParamVector flatten(const ParamLayout& layout, const std::vector<LayerParams>& layers) {
  if (layers.size() != layout.slots.size())
    throw ShapeError("flatten: " + std::to_string(layers.size()) + " layers for a layout of " +
                     std::to_string(layout.slots.size()));
  ParamVector pv{layout, {}};
  pv.values.reserve(layout.total);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& slot = layout.slots[i];
    if (layers[i].weights.size() != slot.weight_count || layers[i].bias.size() != slot.bias_count)
      throw ShapeError("flatten: layer " + std::to_string(i) + " size mismatch");
    pv.values.insert(pv.values.end(), layers[i].weights.values.begin(), layers[i].weights.values.end());
    pv.values.insert(pv.values.end(), layers[i].bias.values.begin(), layers[i].bias.values.end());
  }
  return pv;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  ParamVector pv{make_layout(spec), {}};
  pv.values.assign(pv.layout.total, 0.0);
  Engine eng = make_engine(seed, {stream::kInit});
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    std::size_t fan_in = 0, fan_out = 0;
    if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
      fan_in = d->in_features;
      fan_out = d->out_features;
    } else if (const auto* c = std::get_if<Conv2d>(&spec.layers[i])) {
      fan_in = c->in_channels * c->kernel * c->kernel;
      fan_out = c->out_channels * c->kernel * c->kernel;
    } else {
      continue;
    }
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const auto& slot = pv.layout.slots[i];
    for (std::size_t k = 0; k < slot.weight_count; ++k) pv.values[slot.offset + k] = dist(eng);
  }
  return pv;
}

ForwardCache forward(const ModelSpec& spec, const ParamVector& params, const TensorF& batch) {
  check_params(spec, params);
  const auto shapes = infer_shapes(spec);
  if (batch.shape.size() != spec.input_shape.size() + 1 || batch.sample_shape() != spec.input_shape)
    throw ShapeError("batch shape " + shape_str(batch.shape) + " does not match expected (N," +
                     shape_str(spec.input_shape).substr(1));
  if (batch.batch() == 0) throw ShapeError("empty batch");

  ForwardCache cache;
  cache.activations.reserve(spec.layers.size() + 1);
  cache.activations.push_back(batch);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const TensorF& x = cache.activations.back();
    const auto& slot = params.layout.slots[i];
    const double* w = params.values.data() + slot.offset;
    const double* b = w + slot.weight_count;
    TensorF y = std::visit(
        overloaded{
            [&](const Dense& d) { return dense_forward(d, w, b, x); },
            [&](const Conv2d& c) { return conv_forward(c, w, b, x, shapes[i + 1]); },
            [&](const MaxPool2d& p) {
              Shape out{x.batch()};
              out.insert(out.end(), shapes[i + 1].begin(), shapes[i + 1].end());
              TensorF t(out);
              const auto idx = pool_argmax(p, x, shapes[i + 1]);
              for (std::size_t k = 0; k < idx.size(); ++k) t.values[k] = x.values[idx[k]];
              return t;
            },
            [&](const ReLU&) {
              TensorF t = x;
              for (double& v : t.values) v = v > 0.0 ? v : 0.0;
              return t;
            },
            [&](const Flatten&) { return TensorF({x.batch(), shapes[i + 1][0]}, x.values); },
        },
        spec.layers[i]);
    cache.activations.push_back(std::move(y));
  }
  return cache;
}

LossResult softmax_cross_entropy(const TensorF& logits, std::span<const int> labels) {
  if (logits.shape.size() != 2) throw ShapeError("logits must be (N,C), got " + shape_str(logits.shape));
  const std::size_t batch = logits.shape[0], classes = logits.shape[1];
  if (labels.size() != batch)
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch " +
                     std::to_string(batch));
  LossResult res{0.0, TensorF(logits.shape)};
  const double inv_batch = 1.0 / double(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const int y = labels[n];
    if (y < 0 || std::size_t(y) >= classes)
      throw ValidationError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    const double* z = &logits.values[n * classes];
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    res.loss += lse - z[y];
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(z[c] - lse);
      res.logit_grad.values[n * classes + c] = (p - (int(c) == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  res.loss *= inv_batch;
  return res;
}

LayerGrads backprop(const ModelSpec& spec, const ParamVector& params, const ForwardCache& cache,
                    const TensorF& output_grad) {
  check_params(spec, params);
  if (cache.activations.size() != spec.layers.size() + 1)
    throw ShapeError("forward cache has " + std::to_string(cache.activations.size()) +
                     " activations, model needs " + std::to_string(spec.layers.size() + 1));
  if (output_grad.shape != cache.output().shape)
    throw ShapeError("upstream gradient " + shape_str(output_grad.shape) + " does not match output " +
                     shape_str(cache.output().shape));

  LayerGrads res{ParamVector{params.layout, std::vector<double>(params.values.size(), 0.0)}, {}};
  TensorF dy = output_grad;
  for (std::size_t i = spec.layers.size(); i-- > 0;) {
    const TensorF& x = cache.activations[i];
    const auto& slot = params.layout.slots[i];
    const double* w = params.values.data() + slot.offset;
    double* dw = res.grad.values.data() + slot.offset;
    double* db = dw + slot.weight_count;
    TensorF dx(x.shape);
    std::visit(overloaded{
                   [&](const Dense& d) { dense_backward(d, w, x, dy, dw, db, dx); },
                   [&](const Conv2d& c) { conv_backward(c, w, x, dy, dw, db, dx); },
                   [&](const MaxPool2d& p) {
                     const auto idx = pool_argmax(p, x, cache.activations[i + 1].sample_shape());
                     for (std::size_t k = 0; k < idx.size(); ++k) dx.values[idx[k]] += dy.values[k];
                   },
                   [&](const ReLU&) {
                     for (std::size_t k = 0; k < x.size(); ++k)
                       dx.values[k] = x.values[k] > 0.0 ? dy.values[k] : 0.0;
                   },
                   [&](const Flatten&) { dx.values = dy.values; },
               },
               spec.layers[i]);
    dy = std::move(dx);
  }
  res.input_grad = std::move(dy);
  return res;
}

BackwardResult backward(const ModelSpec& spec, const ParamVector& params, const ForwardCache& cache,
                        std::span<const int> labels) {
  if (cache.activations.empty()) throw ShapeError("empty forward cache");
  if (labels.size() != cache.activations.front().batch())
    throw ShapeError("stale cache: batch of " + std::to_string(cache.activations.front().batch()) +
                     " but " + std::to_string(labels.size()) + " labels");
  LossResult lr = softmax_cross_entropy(cache.output(), labels);
  LayerGrads g = backprop(spec, params, cache, lr.logit_grad);
  return {std::move(g.grad), std::move(g.input_grad), lr.loss};
}

double compute_loss(const ModelSpec& spec, const ParamVector& params, const TensorF& batch,
                    std::span<const int> labels) {
  return softmax_cross_entropy(forward(spec, params, batch).output(), labels).loss;
}

ParamVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params, const TensorF& batch,
                             std::span<const int> labels, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_grad: step h must be > 0");
  ParamVector grad{params.layout, std::vector<double>(params.values.size(), 0.0)};
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double orig = params.values[i];
    probe.values[i] = orig + h;
    const double up = compute_loss(spec, probe, batch, labels);
    probe.values[i] = orig - h;
    const double down = compute_loss(spec, probe, batch, labels);
    probe.values[i] = orig;
    grad.values[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

void sgd_step_inplace(ParamVector& params, const ParamVector& grad, double lr) {
  if (!(params.layout == grad.layout) || params.values.size() != grad.values.size())
    throw ShapeError("sgd_step: gradient layout does not match parameters");
  if (!(lr >= 0.0)) throw ValidationError("sgd_step: learning rate must be non-negative");
  for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= lr * grad.values[i];
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
  ParamVector out = params;
  sgd_step_inplace(out, grad, lr);
  return out;
}

}  // namespace sfl
