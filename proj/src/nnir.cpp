#include "tcu/nnir.hpp"

#include <algorithm>
#include <set>

#include "tcu/error.hpp"

namespace tcu {

namespace {

struct KindEntry {
  LayerKind kind;
  const char* name;
};

constexpr KindEntry kKinds[] = {
    {LayerKind::Conv1D, "Conv1D"},       {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::Dense, "Dense"},         {LayerKind::MaxPool1D, "MaxPool1D"},
    {LayerKind::MaxPool2D, "MaxPool2D"}, {LayerKind::ReLU, "ReLU"},
    {LayerKind::Add, "Add"},             {LayerKind::Flatten, "Flatten"},
    {LayerKind::Reshape, "Reshape"},     {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
};

int spatial_rank(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1D:
    case LayerKind::MaxPool1D: return 1;
    case LayerKind::Conv2D:
    case LayerKind::MaxPool2D: return 2;
    default: return 0;
  }
}

bool is_conv(LayerKind k) { return k == LayerKind::Conv1D || k == LayerKind::Conv2D; }

[[noreturn]] void shape_fail(const LayerSpec& l, const std::string& msg) {
  throw ShapeError("layer '" + l.name + "' (" + kind_name(l.kind) + "): " + msg);
}

void check_attributes(const LayerSpec& l) {
  auto bad = [&](const std::string& what) {
    throw FormatError("layer '" + l.name + "' (" + kind_name(l.kind) +
                      "): " + what);
  };
  const int sr = spatial_rank(l.kind);
  const std::size_t want_inputs = l.kind == LayerKind::Add ? 2 : 1;
  if (l.inputs.size() != want_inputs) {
    bad("expected " + std::to_string(want_inputs) + " input(s), got " +
        std::to_string(l.inputs.size()));
  }
  if (sr > 0) {
    if (l.kernel.size() != static_cast<std::size_t>(sr) ||
        l.stride.size() != static_cast<std::size_t>(sr)) {
      bad("kernel and stride need " + std::to_string(sr) + " value(s)");
    }
    for (auto v : l.kernel) {
      if (v < 1) bad("kernel sizes must be >= 1");
    }
    for (auto v : l.stride) {
      if (v < 1) bad("strides must be >= 1");
    }
  } else {
    if (!l.kernel.empty() || !l.stride.empty()) bad("kind takes no kernel/stride");
    if (l.padding != Padding::Valid) bad("kind takes no padding");
  }
  if (is_conv(l.kind)) {
    if (l.filters < 1) bad("filters must be >= 1");
  } else if (l.filters != 0) {
    bad("kind takes no filters");
  }
  if (l.kind == LayerKind::Dense) {
    if (l.units < 1) bad("units must be >= 1");
  } else if (l.units != 0) {
    bad("kind takes no units");
  }
  if (l.kind == LayerKind::Reshape) {
    if (l.target.empty() || l.target.size() > 3) bad("reshape target needs 1..3 dims");
    for (auto d : l.target) {
      if (d < 1) bad("reshape dims must be >= 1");
    }
  } else if (!l.target.empty()) {
    bad("kind takes no reshape target");
  }
}

}  // namespace

const char* kind_name(LayerKind k) {
  for (const auto& e : kKinds) {
    if (e.kind == k) return e.name;
  }
  return "?";
}

std::optional<LayerKind> kind_from_name(const std::string& s) {
  for (const auto& e : kKinds) {
    if (s == e.name) return e.kind;
  }
  return std::nullopt;
}

bool is_parameterized(LayerKind k) {
  return k == LayerKind::Conv1D || k == LayerKind::Conv2D || k == LayerKind::Dense;
}

LayerSpec LayerSpec::conv1d(std::string name, std::string in, std::int64_t k,
                            std::int64_t filters, std::int64_t stride, Padding pad) {
  LayerSpec l;
  l.kind = LayerKind::Conv1D;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.kernel = {k};
  l.stride = {stride};
  l.padding = pad;
  l.filters = filters;
  return l;
}

LayerSpec LayerSpec::conv2d(std::string name, std::string in, std::int64_t kh,
                            std::int64_t kw, std::int64_t filters, std::int64_t sh,
                            std::int64_t sw, Padding pad) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.kernel = {kh, kw};
  l.stride = {sh, sw};
  l.padding = pad;
  l.filters = filters;
  return l;
}

LayerSpec LayerSpec::dense(std::string name, std::string in, std::int64_t units) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.units = units;
  return l;
}

LayerSpec LayerSpec::maxpool1d(std::string name, std::string in, std::int64_t k,
                               std::int64_t stride, Padding pad) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool1D;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.kernel = {k};
  l.stride = {stride};
  l.padding = pad;
  return l;
}

LayerSpec LayerSpec::maxpool2d(std::string name, std::string in, std::int64_t kh,
                               std::int64_t kw, std::int64_t sh, std::int64_t sw,
                               Padding pad) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2D;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.kernel = {kh, kw};
  l.stride = {sh, sw};
  l.padding = pad;
  return l;
}

LayerSpec LayerSpec::relu(std::string name, std::string in) {
  LayerSpec l;
  l.kind = LayerKind::ReLU;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  return l;
}

LayerSpec LayerSpec::add(std::string name, std::string a, std::string b) {
  LayerSpec l;
  l.kind = LayerKind::Add;
  l.name = std::move(name);
  l.inputs = {std::move(a), std::move(b)};
  return l;
}

LayerSpec LayerSpec::flatten(std::string name, std::string in) {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  return l;
}

LayerSpec LayerSpec::reshape(std::string name, std::string in,
                             std::vector<std::int64_t> target) {
  LayerSpec l;
  l.kind = LayerKind::Reshape;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  l.target = std::move(target);
  return l;
}

LayerSpec LayerSpec::global_avg_pool(std::string name, std::string in) {
  LayerSpec l;
  l.kind = LayerKind::GlobalAvgPool;
  l.name = std::move(name);
  l.inputs = {std::move(in)};
  return l;
}

const LayerSpec* ModelGraph::find(const std::string& layer) const {
  for (const auto& l : layers) {
    if (l.name == layer) return &l;
  }
  return nullptr;
}

bool structurally_equal(const ModelGraph& a, const ModelGraph& b) {
  if (a.name != b.name || a.input_shape != b.input_shape ||
      a.layers != b.layers || a.output != b.output ||
      a.weights.size() != b.weights.size()) {
    return false;
  }
  for (const auto& [name, w] : a.weights) {
    const auto it = b.weights.find(name);
    if (it == b.weights.end()) return false;
    const auto& o = it->second;
    if (w.kernel.rows() != o.kernel.rows() || w.kernel.cols() != o.kernel.cols() ||
        w.bias.size() != o.bias.size()) {
      return false;
    }
    // Bit-exact, not approximate.
    if (!(w.kernel.array() == o.kernel.array()).all()) return false;
    if (!(w.bias.array() == o.bias.array()).all()) return false;
  }
  return true;
}

std::vector<SpatialDim> spatial_dims(const LayerSpec& l, const TensorShape& in) {
  const int sr = spatial_rank(l.kind);
  if (sr == 0) return {};
  if (in.rank() != sr + 1) {
    shape_fail(l, "expected rank-" + std::to_string(sr + 1) + " input, got " +
                      in.str());
  }
  std::vector<SpatialDim> out;
  for (int d = 0; d < sr; ++d) {
    SpatialDim s;
    s.in = in[d];
    s.kernel = l.kernel[static_cast<std::size_t>(d)];
    s.stride = l.stride[static_cast<std::size_t>(d)];
    if (l.padding == Padding::Valid) {
      if (s.kernel > s.in) {
        shape_fail(l, "kernel " + std::to_string(s.kernel) +
                          " larger than input " + std::to_string(s.in) +
                          " under valid padding");
      }
      s.out = (s.in - s.kernel) / s.stride + 1;
      s.pad_before = 0;
    } else {
      s.out = (s.in + s.stride - 1) / s.stride;
      const std::int64_t total =
          std::max<std::int64_t>((s.out - 1) * s.stride + s.kernel - s.in, 0);
      s.pad_before = total / 2;
    }
    out.push_back(s);
  }
  return out;
}

std::int64_t window_outputs(const std::vector<SpatialDim>& dims) {
  std::int64_t n = 1;
  for (const auto& d : dims) n *= d.out;
  return n;
}

std::int64_t window_taps(const std::vector<SpatialDim>& dims) {
  std::int64_t n = 1;
  for (const auto& d : dims) n *= d.kernel;
  return n;
}

std::int64_t window_source(const std::vector<SpatialDim>& dims, std::int64_t out,
                           std::int64_t tap) {
  std::int64_t pos = 0;
  // Peel trailing dims first; both indices are row-major.
  std::vector<std::int64_t> o(dims.size());
  std::vector<std::int64_t> k(dims.size());
  for (std::size_t d = dims.size(); d-- > 0;) {
    o[d] = out % dims[d].out;
    out /= dims[d].out;
    k[d] = tap % dims[d].kernel;
    tap /= dims[d].kernel;
  }
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const std::int64_t i = o[d] * dims[d].stride - dims[d].pad_before + k[d];
    if (i < 0 || i >= dims[d].in) return -1;
    pos = pos * dims[d].in + i;
  }
  return pos;
}

TensorShape infer_layer_shape(const LayerSpec& l, const std::vector<TensorShape>& in) {
  const TensorShape& x = in.front();
  switch (l.kind) {
    case LayerKind::Conv1D:
    case LayerKind::Conv2D:
    case LayerKind::MaxPool1D:
    case LayerKind::MaxPool2D: {
      const auto dims = spatial_dims(l, x);
      std::vector<std::int64_t> out;
      for (const auto& d : dims) out.push_back(d.out);
      out.push_back(is_conv(l.kind) ? l.filters : x.channels());
      return TensorShape(out);
    }
    case LayerKind::Dense:
      if (x.rank() != 1) {
        shape_fail(l, "Dense needs a rank-1 input, got " + x.str());
      }
      return TensorShape{l.units};
    case LayerKind::ReLU:
      return x;
    case LayerKind::Add:
      if (in[0] != in[1]) {
        shape_fail(l, "Add inputs differ: " + in[0].str() + " vs " + in[1].str());
      }
      return x;
    case LayerKind::Flatten:
      return TensorShape{x.elements()};
    case LayerKind::Reshape: {
      TensorShape t(l.target);
      if (t.elements() != x.elements()) {
        shape_fail(l, "cannot reshape " + x.str() + " to " + t.str());
      }
      return t;
    }
    case LayerKind::GlobalAvgPool:
      if (x.rank() < 2) {
        shape_fail(l, "GlobalAvgPool needs a spatial input, got " + x.str());
      }
      return TensorShape{x.channels()};
  }
  shape_fail(l, "unknown kind");
}

std::pair<std::int64_t, std::int64_t> kernel_matrix_shape(const LayerSpec& l,
                                                          const TensorShape& in) {
  if (l.kind == LayerKind::Dense) return {in.elements(), l.units};
  std::int64_t k = in.channels();
  for (auto v : l.kernel) k *= v;
  return {k, l.filters};
}

namespace {

ShapeMap infer_structure(const ModelGraph& g, bool check_weights) {
  if (!g.input_shape.valid()) {
    throw ShapeError("graph input shape " + g.input_shape.str() +
                     " is not a rank 1..3 shape of positive dims");
  }
  ShapeMap shapes;
  shapes[kGraphInput] = g.input_shape;
  std::set<std::string> consumed;
  for (const auto& l : g.layers) {
    if (l.name.empty() || l.name == kGraphInput) {
      throw FormatError("invalid layer name '" + l.name + "'");
    }
    if (shapes.count(l.name) != 0) {
      throw FormatError("duplicate layer name '" + l.name + "'");
    }
    check_attributes(l);
    std::vector<TensorShape> ins;
    for (const auto& src : l.inputs) {
      const auto it = shapes.find(src);
      if (it == shapes.end()) {
        throw FormatError("layer '" + l.name + "' reads '" + src +
                          "' which is not defined earlier");
      }
      ins.push_back(it->second);
      consumed.insert(src);
    }
    const TensorShape out = infer_layer_shape(l, ins);
    shapes[l.name] = out;

    if (!check_weights) continue;
    const auto wit = g.weights.find(l.name);
    if (is_parameterized(l.kind)) {
      if (wit == g.weights.end()) {
        throw FormatError("layer '" + l.name + "' has no weights");
      }
      const auto [k, n] = kernel_matrix_shape(l, ins.front());
      const auto& w = wit->second;
      if (w.kernel.rows() != k || w.kernel.cols() != n) {
        throw ShapeError("layer '" + l.name + "': kernel shape " +
                         std::to_string(w.kernel.rows()) + "x" +
                         std::to_string(w.kernel.cols()) + " does not match " +
                         std::to_string(k) + "x" + std::to_string(n));
      }
      if (w.bias.size() != n) {
        throw ShapeError("layer '" + l.name + "': bias length " +
                         std::to_string(w.bias.size()) + " does not match " +
                         std::to_string(n));
      }
    } else if (wit != g.weights.end()) {
      throw FormatError("layer '" + l.name + "' (" + kind_name(l.kind) +
                        ") must not carry weights");
    }
  }
  if (check_weights) {
    for (const auto& [name, w] : g.weights) {
      if (g.find(name) == nullptr) {
        throw FormatError("weights for unknown layer '" + name + "'");
      }
    }
  }
  if (g.find(g.output) == nullptr) {
    throw FormatError("output layer '" + g.output + "' not found");
  }
  for (const auto& l : g.layers) {
    if (l.name != g.output && consumed.count(l.name) == 0) {
      throw FormatError("layer '" + l.name +
                        "' is never consumed; a graph has exactly one output");
    }
  }
  return shapes;
}

}  // namespace

void validate_graph(const ModelGraph& g) { infer_structure(g, true); }

ShapeMap infer_shapes(const ModelGraph& g) { return infer_structure(g, false); }

CostReport count_macs(const ModelGraph& g) {
  const ShapeMap shapes = infer_shapes(g);
  CostReport r;
  for (const auto& l : g.layers) {
    LayerCost c{l.name, 0, 0};
    if (is_parameterized(l.kind)) {
      const TensorShape& in = shapes.at(l.inputs.front());
      const TensorShape& out = shapes.at(l.name);
      const auto [k, n] = kernel_matrix_shape(l, in);
      c.macs = out.positions() * n * k;
      c.params = k * n + n;
    }
    r.total_macs += c.macs;
    r.total_params += c.params;
    r.per_layer.push_back(c);
  }
  return r;
}

}  // namespace tcu
