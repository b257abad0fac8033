// Reference executors. Both walk the layer list in order and keep every
// activation by name; they are the oracle the compiled path is checked against,
// so they stay loop-for-loop literal rather than fast.
#include <algorithm>
#include <limits>

#include "tcu/error.hpp"
#include "tcu/nnir.hpp"

namespace tcu {

namespace {

/// Calls fn(out_pos, tap, in_pos) for every output position and kernel tap of
/// a windowed layer; in_pos is -1 for taps that fall in the padding.
template <typename Fn>
void for_each_window(const std::vector<SpatialDim>& dims, Fn&& fn) {
  if (dims.size() == 1) {
    const auto& d = dims[0];
    for (std::int64_t o = 0; o < d.out; ++o) {
      for (std::int64_t k = 0; k < d.kernel; ++k) {
        const std::int64_t i = o * d.stride - d.pad_before + k;
        fn(o, k, (i >= 0 && i < d.in) ? i : -1);
      }
    }
    return;
  }
  const auto& h = dims[0];
  const auto& w = dims[1];
  for (std::int64_t oh = 0; oh < h.out; ++oh) {
    for (std::int64_t ow = 0; ow < w.out; ++ow) {
      for (std::int64_t kh = 0; kh < h.kernel; ++kh) {
        for (std::int64_t kw = 0; kw < w.kernel; ++kw) {
          const std::int64_t ih = oh * h.stride - h.pad_before + kh;
          const std::int64_t iw = ow * w.stride - w.pad_before + kw;
          const bool valid = ih >= 0 && ih < h.in && iw >= 0 && iw < w.in;
          fn(oh * w.out + ow, kh * w.kernel + kw, valid ? ih * w.in + iw : -1);
        }
      }
    }
  }
}

template <typename Scalar>
const Tensor<Scalar>& lookup(const std::map<std::string, Tensor<Scalar>>& acts,
                             const std::string& name) {
  return acts.at(name);
}

}  // namespace

TensorF execute_float(const ModelGraph& g, const TensorF& input,
                      MulCounter* counter) {
  if (input.shape != g.input_shape) {
    throw ShapeError("input shape " + input.shape.str() + " does not match graph input " +
                     g.input_shape.str());
  }
  const ShapeMap shapes = infer_shapes(g);
  std::map<std::string, TensorF> acts;
  acts[kGraphInput] = input;
  std::int64_t muls = 0;

  for (const auto& l : g.layers) {
    const TensorF& x = lookup(acts, l.inputs.front());
    TensorF y(shapes.at(l.name));
    switch (l.kind) {
      case LayerKind::Conv1D:
      case LayerKind::Conv2D: {
        const auto& w = g.weights.at(l.name);
        const auto dims = spatial_dims(l, x.shape);
        const std::int64_t cin = x.shape.channels();
        const std::int64_t cout = l.filters;
        for (std::int64_t p = 0; p < y.shape.positions(); ++p) {
          for (std::int64_t n = 0; n < cout; ++n) y[p * cout + n] = w.bias[n];
        }
        for_each_window(dims, [&](std::int64_t o, std::int64_t tap, std::int64_t i) {
          for (std::int64_t c = 0; c < cin; ++c) {
            const double v = i >= 0 ? x[i * cin + c] : 0.0;
            for (std::int64_t n = 0; n < cout; ++n) {
              y[o * cout + n] += v * w.kernel(tap * cin + c, n);
              ++muls;
            }
          }
        });
        break;
      }
      case LayerKind::Dense: {
        const auto& w = g.weights.at(l.name);
        for (std::int64_t n = 0; n < l.units; ++n) {
          double acc = w.bias[n];
          for (std::int64_t k = 0; k < x.size(); ++k) {
            acc += x[k] * w.kernel(k, n);
            ++muls;
          }
          y[n] = acc;
        }
        break;
      }
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D: {
        const auto dims = spatial_dims(l, x.shape);
        const std::int64_t c = x.shape.channels();
        y.data.setConstant(-std::numeric_limits<double>::infinity());
        for_each_window(dims, [&](std::int64_t o, std::int64_t, std::int64_t i) {
          if (i < 0) return;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            y[o * c + ch] = std::max(y[o * c + ch], x[i * c + ch]);
          }
        });
        break;
      }
      case LayerKind::ReLU:
        y.data = x.data.cwiseMax(0.0);
        break;
      case LayerKind::Add:
        y.data = x.data + lookup(acts, l.inputs[1]).data;
        break;
      case LayerKind::Flatten:
      case LayerKind::Reshape:
        y.data = x.data;
        break;
      case LayerKind::GlobalAvgPool: {
        const std::int64_t positions = x.shape.positions();
        const std::int64_t c = x.shape.channels();
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double sum = 0.0;
          for (std::int64_t p = 0; p < positions; ++p) sum += x[p * c + ch];
          y[ch] = sum / static_cast<double>(positions);
        }
        break;
      }
    }
    acts[l.name] = std::move(y);
  }
  if (counter != nullptr) counter->multiplies += muls;
  return acts.at(g.output);
}

QWeightStore quantize_weights(const ModelGraph& g, const FixedPointFormat& fmt) {
  QWeightStore q;
  for (const auto& [name, w] : g.weights) {
    QuantizedWeights qw;
    qw.kernel = w.kernel.unaryExpr([&](double v) { return quantize(v, fmt); });
    qw.bias = w.bias.unaryExpr([&](double v) { return quantize(v, fmt); });
    q.emplace(name, std::move(qw));
  }
  return q;
}

std::int32_t avg_pool_factor(std::int64_t positions, const FixedPointFormat& fmt) {
  return quantize(1.0 / static_cast<double>(positions), fmt);
}

QTensor execute_quant(const ModelGraph& g, const QTensor& input) {
  if (input.shape() != g.input_shape) {
    throw ShapeError("input shape " + input.shape().str() +
                     " does not match graph input " + g.input_shape.str());
  }
  const FixedPointFormat& fmt = input.format;
  const ShapeMap shapes = infer_shapes(g);
  const QWeightStore qw = quantize_weights(g, fmt);
  using QT = Tensor<std::int32_t>;
  std::map<std::string, QT> acts;
  acts[kGraphInput] = input.values;

  for (const auto& l : g.layers) {
    const QT& x = lookup(acts, l.inputs.front());
    QT y(shapes.at(l.name));
    switch (l.kind) {
      case LayerKind::Conv1D:
      case LayerKind::Conv2D: {
        const auto& w = qw.at(l.name);
        const auto dims = spatial_dims(l, x.shape);
        const std::int64_t cin = x.shape.channels();
        const std::int64_t cout = l.filters;
        // Accumulate over the lowered reduction index k = tap * cin + c in
        // ascending order: saturation makes the order observable.
        std::vector<std::int64_t> acc(static_cast<std::size_t>(y.size()), 0);
        for_each_window(dims, [&](std::int64_t o, std::int64_t tap, std::int64_t i) {
          if (i < 0) return;  // zero padding contributes nothing
          for (std::int64_t c = 0; c < cin; ++c) {
            const std::int32_t v = x[i * cin + c];
            for (std::int64_t n = 0; n < cout; ++n) {
              auto& a = acc[static_cast<std::size_t>(o * cout + n)];
              a = mac_acc(a, v, w.kernel(tap * cin + c, n), fmt);
            }
          }
        });
        for (std::int64_t j = 0; j < y.size(); ++j) {
          const std::int64_t a =
              acc_add(acc[static_cast<std::size_t>(j)], widen(w.bias[j % cout], fmt), fmt);
          y[j] = rescale(a, fmt);
        }
        break;
      }
      case LayerKind::Dense: {
        const auto& w = qw.at(l.name);
        for (std::int64_t n = 0; n < l.units; ++n) {
          std::int64_t a = 0;
          for (std::int64_t k = 0; k < x.size(); ++k) {
            a = mac_acc(a, x[k], w.kernel(k, n), fmt);
          }
          y[n] = rescale(acc_add(a, widen(w.bias[n], fmt), fmt), fmt);
        }
        break;
      }
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D: {
        const auto dims = spatial_dims(l, x.shape);
        const std::int64_t c = x.shape.channels();
        y.data.setConstant(std::numeric_limits<std::int32_t>::min());
        for_each_window(dims, [&](std::int64_t o, std::int64_t, std::int64_t i) {
          if (i < 0) return;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            y[o * c + ch] = std::max(y[o * c + ch], x[i * c + ch]);
          }
        });
        break;
      }
      case LayerKind::ReLU:
        y.data = x.data.cwiseMax(0);
        break;
      case LayerKind::Add: {
        const QT& b = lookup(acts, l.inputs[1]);
        for (std::int64_t j = 0; j < y.size(); ++j) {
          y[j] = saturate_storage(std::int64_t{x[j]} + b[j], fmt);
        }
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Reshape:
        y.data = x.data;
        break;
      case LayerKind::GlobalAvgPool: {
        const std::int64_t positions = x.shape.positions();
        const std::int64_t c = x.shape.channels();
        const std::int32_t factor = avg_pool_factor(positions, fmt);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          std::int64_t a = 0;
          for (std::int64_t p = 0; p < positions; ++p) {
            a = mac_acc(a, x[p * c + ch], factor, fmt);
          }
          y[ch] = rescale(a, fmt);
        }
        break;
      }
    }
    acts[l.name] = std::move(y);
  }
  return QTensor{acts.at(g.output), fmt};
}

}  // namespace tcu
