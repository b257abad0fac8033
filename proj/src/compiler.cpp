#include "tcu/compiler.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "tcu/error.hpp"

namespace tcu {

namespace {

constexpr std::int64_t kMaxSimdCount = std::numeric_limits<std::uint16_t>::max();

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

bool is_conv(LayerKind k) { return k == LayerKind::Conv1D || k == LayerKind::Conv2D; }

bool needs_im2col(const LayerSpec& l) {
  if (!is_conv(l.kind)) return false;
  for (auto k : l.kernel) {
    if (k != 1) return true;
  }
  for (auto s : l.stride) {
    if (s != 1) return true;
  }
  return false;
}

bool same_layout(const TensorShape& a, const TensorShape& b) {
  return a.positions() == b.positions() && a.channels() == b.channels();
}

enum class StepKind { MatMul, AvgPool, MaxPool, Relu, Add, Relayout };

struct Step {
  StepKind kind = StepKind::Relu;
  const LayerSpec* layer = nullptr;
  std::string output;
  bool fused_relu = false;
};

/// Values, steps, and which values share a dram1 buffer.
struct Schedule {
  ShapeMap shapes;
  std::vector<Step> steps;
  std::map<std::string, std::string> alias;  // value -> value that owns the buffer

  const std::string& owner(const std::string& v) const {
    const auto it = alias.find(v);
    return it == alias.end() ? v : it->second;
  }
};

Schedule build_schedule(const ModelGraph& g) {
  validate_graph(g);
  Schedule s;
  s.shapes = infer_shapes(g);

  std::map<std::string, int> consumers;
  for (const auto& l : g.layers) {
    for (const auto& in : l.inputs) ++consumers[in];
  }
  // A ReLU folds into its producer when it is that producer's only reader.
  std::map<std::string, std::string> fused_into;
  std::set<std::string> fused_relus;
  for (const auto& l : g.layers) {
    if (l.kind != LayerKind::ReLU) continue;
    const LayerSpec* p = g.find(l.inputs.front());
    if (p == nullptr || !is_parameterized(p->kind)) continue;
    if (consumers[p->name] != 1 || p->name == g.output) continue;
    fused_into[p->name] = l.name;
    fused_relus.insert(l.name);
  }

  for (const auto& l : g.layers) {
    if (fused_relus.count(l.name) != 0) continue;
    Step st;
    st.layer = &l;
    st.output = l.name;
    switch (l.kind) {
      case LayerKind::Conv1D:
      case LayerKind::Conv2D:
      case LayerKind::Dense:
        st.kind = StepKind::MatMul;
        if (const auto it = fused_into.find(l.name); it != fused_into.end()) {
          st.fused_relu = true;
          st.output = it->second;
        }
        break;
      case LayerKind::GlobalAvgPool: st.kind = StepKind::AvgPool; break;
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D: st.kind = StepKind::MaxPool; break;
      case LayerKind::ReLU: st.kind = StepKind::Relu; break;
      case LayerKind::Add: st.kind = StepKind::Add; break;
      case LayerKind::Flatten:
      case LayerKind::Reshape: {
        const auto& src = l.inputs.front();
        if (same_layout(s.shapes.at(src), s.shapes.at(l.name))) {
          s.alias[l.name] = s.owner(src);
          continue;
        }
        st.kind = StepKind::Relayout;
        break;
      }
    }
    s.steps.push_back(st);
  }
  return s;
}

struct Buffer {
  std::string layer;
  std::string purpose;
  std::int64_t extent = 0;
  std::int64_t first = 0;
  std::int64_t last = 0;
  std::int64_t base = 0;
};

void first_fit(std::vector<Buffer>& bufs, ReusePolicy policy) {
  std::vector<const Buffer*> placed;
  std::int64_t bump = 0;
  for (auto& b : bufs) {
    if (policy == ReusePolicy::None) {
      b.base = bump;
      bump += b.extent;
      placed.push_back(&b);
      continue;
    }
    std::vector<std::pair<std::int64_t, std::int64_t>> busy;
    for (const Buffer* p : placed) {
      if (p->first <= b.last && b.first <= p->last) busy.emplace_back(p->base, p->base + p->extent);
    }
    std::sort(busy.begin(), busy.end());
    std::int64_t addr = 0;
    for (const auto& [lo, hi] : busy) {
      if (addr + b.extent <= lo) break;
      addr = std::max(addr, hi);
    }
    b.base = addr;
    placed.push_back(&b);
  }
}

struct Workspace {
  // Local.
  std::int64_t w_slot = 0;
  std::int64_t in_a = 0;
  std::int64_t in_b = 0;
  std::int64_t out = 0;
  // Accumulators.
  std::int64_t acc_out = 0;
  std::int64_t acc_aux = 0;
  std::int64_t block = 0;
  std::int64_t local_used = 0;
  std::int64_t acc_used = 0;
};

/// Per-step row block and working set; throws CapacityError when the step
/// cannot run with even a single row.
Workspace plan_workspace(const Step& st, const Schedule& s, const ArchConfig& arch) {
  const LayerSpec& l = *st.layer;
  const std::int64_t A = arch.array_size;
  const std::int64_t L = arch.local_depth;
  const std::int64_t C = arch.acc_depth;
  Workspace w;
  auto require = [&](const char* region, std::int64_t need, std::int64_t have) {
    if (need > have) throw CapacityError(region, l.name, need - have);
  };
  switch (st.kind) {
    case StepKind::MatMul: {
      const std::int64_t rows = s.shapes.at(l.name).positions();
      require("local", 3, L);
      require("acc", 2, C);
      w.block = std::min({rows, (L - 1) / 2, C - 1, kMaxSimdCount});
      w.w_slot = 0;
      w.in_a = 1;
      w.out = 1 + w.block;
      w.local_used = 1 + 2 * w.block;
      w.acc_out = 0;
      w.acc_aux = w.block;  // bias
      w.acc_used = w.block + 1;
      break;
    }
    case StepKind::AvgPool: {
      const std::int64_t rows = s.shapes.at(l.inputs.front()).positions();
      require("local", 3, L);
      require("acc", 1, C);
      w.block = std::min(rows, L - 2);
      w.w_slot = 0;
      w.out = 1;
      w.in_a = 2;
      w.local_used = 2 + w.block;
      w.acc_out = 0;
      w.acc_used = 1;
      break;
    }
    case StepKind::MaxPool:
    case StepKind::Add: {
      const std::int64_t rows = st.kind == StepKind::MaxPool
                                    ? s.shapes.at(l.name).positions()
                                    : VectorLayout::of(s.shapes.at(l.name), 0, A).vectors();
      require("local", 2, L);
      require("acc", 2, C);
      w.block = std::min({rows, L / 2, C / 2, kMaxSimdCount});
      w.in_a = 0;
      w.in_b = w.block;
      w.out = 0;
      w.local_used = 2 * w.block;
      w.acc_out = 0;
      w.acc_aux = w.block;
      w.acc_used = 2 * w.block;
      break;
    }
    case StepKind::Relu: {
      const std::int64_t vecs = VectorLayout::of(s.shapes.at(l.name), 0, A).vectors();
      w.block = std::min({vecs, L, C, kMaxSimdCount});
      w.in_a = 0;
      w.out = 0;
      w.local_used = w.block;
      w.acc_out = 0;
      w.acc_used = w.block;
      break;
    }
    case StepKind::Relayout:
      break;
  }
  return w;
}

/// Everything `allocate` decides, kept together so emission reads it back
/// without re-deriving addresses.
struct Layout {
  Schedule sched;
  TilingPlan tiling;
  std::vector<Workspace> ws;
  std::map<std::string, std::int64_t> value_base;  // dram1
  std::map<std::string, std::int64_t> temp_base;   // dram1, by layer
  std::map<std::string, std::int64_t> weight_base; // dram0, by layer
  std::map<std::string, std::int64_t> bias_base;   // dram0, by layer
  std::int64_t zero_vector = -1;                   // dram0
  std::int64_t dram0_extent = 0;
  MemoryPlan plan;
};

bool needs_zero_fill(const Step& st) {
  return st.kind == StepKind::MatMul && needs_im2col(*st.layer) &&
         st.layer->padding == Padding::Same;
}

std::int64_t temp_vectors(const Step& st, const Schedule& s, std::int64_t A) {
  const LayerSpec& l = *st.layer;
  if (st.kind == StepKind::MatMul && needs_im2col(l)) {
    const auto [k, n] = kernel_matrix_shape(l, s.shapes.at(l.inputs.front()));
    (void)n;
    return ceil_div(k, A) * s.shapes.at(l.name).positions();
  }
  if (st.kind == StepKind::MaxPool) {
    const auto dims = spatial_dims(l, s.shapes.at(l.inputs.front()));
    return window_taps(dims) * VectorLayout::of(s.shapes.at(l.name), 0, A).vectors();
  }
  return 0;
}

Layout build_layout(const ModelGraph& g, const ArchConfig& arch, const TilingPlan& tiling,
                    ReusePolicy policy) {
  require_valid(arch);
  Layout lay;
  lay.sched = build_schedule(g);
  lay.tiling = tiling;
  const Schedule& s = lay.sched;
  const std::int64_t A = arch.array_size;
  const auto nsteps = static_cast<std::int64_t>(s.steps.size());

  for (const auto& st : s.steps) {
    lay.plan.steps.push_back({st.layer->name, st.output, st.fused_relu, 0});
  }

  // dram1: activations with liveness, plus per-step temporaries.
  std::vector<Buffer> bufs;
  std::map<std::string, std::size_t> buf_of_value;
  auto add_value = [&](const std::string& v, std::int64_t step) {
    buf_of_value[v] = bufs.size();
    bufs.push_back({v, v == kGraphInput ? "input" : "activation",
                    VectorLayout::of(s.shapes.at(v), 0, A).vectors(), step, step, 0});
  };
  auto touch = [&](const std::string& v, std::int64_t step) {
    auto& b = bufs[buf_of_value.at(s.owner(v))];
    b.last = std::max(b.last, step);
  };
  add_value(kGraphInput, -1);
  std::map<std::string, std::size_t> temp_of_layer;
  for (std::int64_t i = 0; i < nsteps; ++i) {
    const Step& st = s.steps[static_cast<std::size_t>(i)];
    for (const auto& in : st.layer->inputs) touch(in, i);
    if (const auto tv = temp_vectors(st, s, A); tv > 0) {
      temp_of_layer[st.layer->name] = bufs.size();
      bufs.push_back({st.layer->name, st.kind == StepKind::MaxPool ? "windows" : "im2col", tv,
                      i, i, 0});
    }
    add_value(st.output, i);
  }
  touch(g.output, nsteps);
  first_fit(bufs, policy);

  std::int64_t dram1_peak = 0;
  for (const auto& b : bufs) {
    dram1_peak = std::max(dram1_peak, b.base + b.extent);
    if (b.base + b.extent > arch.dram1_depth) {
      throw CapacityError("dram1", b.layer, b.base + b.extent - arch.dram1_depth);
    }
    lay.plan.allocations.push_back(
        {b.layer, b.purpose, Region::Dram1, b.base, b.extent, b.first, b.last});
  }
  for (const auto& [v, idx] : buf_of_value) lay.value_base[v] = bufs[idx].base;
  for (const auto& [v, owner] : s.alias) lay.value_base[v] = bufs[buf_of_value.at(owner)].base;
  for (const auto& [layer, idx] : temp_of_layer) lay.temp_base[layer] = bufs[idx].base;

  // dram0: constants, packed in step order after an optional zero vector.
  std::int64_t d0 = 0;
  auto place0 = [&](const std::string& layer, const std::string& purpose, std::int64_t n) {
    const std::int64_t base = d0;
    d0 += n;
    if (d0 > arch.dram0_depth) throw CapacityError("dram0", layer, d0 - arch.dram0_depth);
    lay.plan.allocations.push_back({layer, purpose, Region::Dram0, base, n, 0, nsteps});
    return base;
  };
  for (const auto& st : s.steps) {
    if (needs_zero_fill(st)) {
      lay.zero_vector = place0("*", "zero", 1);
      break;
    }
  }
  for (const auto& st : s.steps) {
    const LayerSpec& l = *st.layer;
    if (st.kind == StepKind::MatMul) {
      const LayerTiling* t = tiling.find(l.name);
      lay.weight_base[l.name] =
          place0(l.name, "weights", t->output_tiles * t->reduction_tiles * A);
      lay.bias_base[l.name] = place0(l.name, "bias", t->output_tiles);
    } else if (st.kind == StepKind::AvgPool) {
      lay.weight_base[l.name] = place0(l.name, "weights", A);
    }
  }
  lay.dram0_extent = d0;

  // local / acc: per-step working sets, all dead at step end.
  std::int64_t local_peak = 0;
  std::int64_t acc_peak = 0;
  for (std::int64_t i = 0; i < nsteps; ++i) {
    const Step& st = s.steps[static_cast<std::size_t>(i)];
    const Workspace w = plan_workspace(st, s, arch);
    lay.ws.push_back(w);
    lay.plan.steps[static_cast<std::size_t>(i)].row_block = w.block;
    const std::string& name = st.layer->name;
    auto rec = [&](Region r, const char* purpose, std::int64_t base, std::int64_t n) {
      if (n > 0) lay.plan.allocations.push_back({name, purpose, r, base, n, i, i});
    };
    switch (st.kind) {
      case StepKind::MatMul:
        rec(Region::Local, "weights", w.w_slot, 1);
        rec(Region::Local, "input", w.in_a, w.block);
        rec(Region::Local, "output", w.out, w.block);
        rec(Region::Acc, "output", w.acc_out, w.block);
        rec(Region::Acc, "bias", w.acc_aux, 1);
        break;
      case StepKind::AvgPool:
        rec(Region::Local, "weights", w.w_slot, 1);
        rec(Region::Local, "output", w.out, 1);
        rec(Region::Local, "input", w.in_a, w.block);
        rec(Region::Acc, "output", w.acc_out, 1);
        break;
      case StepKind::MaxPool:
      case StepKind::Add:
        rec(Region::Local, "input", w.in_a, w.block);
        rec(Region::Local, "input_b", w.in_b, w.block);
        rec(Region::Acc, "output", w.acc_out, w.block);
        rec(Region::Acc, "scratch", w.acc_aux, w.block);
        break;
      case StepKind::Relu:
        rec(Region::Local, "buffer", w.in_a, w.block);
        rec(Region::Acc, "output", w.acc_out, w.block);
        break;
      case StepKind::Relayout:
        break;
    }
    local_peak = std::max(local_peak, w.local_used);
    acc_peak = std::max(acc_peak, w.acc_used);
  }
  lay.plan.peak = {d0, dram1_peak, local_peak, acc_peak};
  return lay;
}

/// Builds element-granular DataMoves, merging runs where source and
/// destination both advance by one.
class GatherEmitter {
 public:
  GatherEmitter(std::vector<Instruction>& out, std::int64_t max_run)
      : out_(out), max_run_(max_run) {}

  void copy(MoveDir dir, std::int64_t src, std::int64_t dst) {
    if (open_ && dir == dir_ && src == src_ + len_ && dst == dst_ + len_ && len_ < max_run_) {
      ++len_;
      return;
    }
    flush();
    open_ = true;
    dir_ = dir;
    src_ = src;
    dst_ = dst;
    len_ = 1;
  }

  void flush() {
    if (!open_) return;
    out_.push_back(DataMove{dir_, true, static_cast<std::uint32_t>(src_),
                            static_cast<std::uint32_t>(dst_), static_cast<std::uint32_t>(len_)});
    open_ = false;
  }

 private:
  std::vector<Instruction>& out_;
  std::int64_t max_run_;
  bool open_ = false;
  MoveDir dir_ = MoveDir::Dram1ToDram1;
  std::int64_t src_ = 0;
  std::int64_t dst_ = 0;
  std::int64_t len_ = 0;
};

std::uint32_t u32(std::int64_t v) { return static_cast<std::uint32_t>(v); }

DataMove move(MoveDir d, std::int64_t src, std::int64_t dst, std::int64_t n) {
  return DataMove{d, false, u32(src), u32(dst), u32(n)};
}

Simd simd(SimdOp op, std::int64_t a, std::optional<std::int64_t> b, bool bcast,
          std::int64_t dst, std::int64_t n) {
  Simd s;
  s.op = op;
  s.src_a = u32(a);
  if (b) s.src_b = u32(*b);
  s.broadcast_b = bcast;
  s.dst = u32(dst);
  s.count = static_cast<std::uint16_t>(n);
  return s;
}

class Emitter {
 public:
  Emitter(const ModelGraph& g, const ArchConfig& arch, const Layout& lay)
      : g_(g), arch_(arch), lay_(lay), A_(arch.array_size),
        fmt_(FixedPointFormat::from_arch(arch)), qw_(quantize_weights(g, fmt_)) {
    constants_.assign(static_cast<std::size_t>(lay.dram0_extent * A_), 0);
  }

  TcuProgram run() {
    const auto& steps = lay_.sched.steps;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const Step& st = steps[i];
      const Workspace& w = lay_.ws[i];
      switch (st.kind) {
        case StepKind::MatMul: emit_matmul(st, w); break;
        case StepKind::AvgPool: emit_avgpool(st, w); break;
        case StepKind::MaxPool: emit_maxpool(st, w); break;
        case StepKind::Relu: emit_relu(st, w); break;
        case StepKind::Add: emit_add(st, w); break;
        case StepKind::Relayout: emit_relayout(st); break;
      }
    }
    TcuProgram p;
    p.model_name = g_.name;
    p.arch = arch_;
    p.instructions = std::move(prog_);
    p.input = {g_.input_shape, lay_.value_base.at(kGraphInput)};
    p.output = {shape(g_.output), lay_.value_base.at(g_.output)};
    p.constants = std::move(constants_);
    p.graph_macs = count_macs(g_).total_macs;
    return p;
  }

 private:
  const TensorShape& shape(const std::string& v) const { return lay_.sched.shapes.at(v); }
  VectorLayout layout(const std::string& v) const {
    return VectorLayout::of(shape(v), lay_.value_base.at(v), A_);
  }
  void set_const(std::int64_t vec, std::int64_t lane, std::int32_t v) {
    constants_[static_cast<std::size_t>(vec * A_ + lane)] = v;
  }

  // Streams one A x A tile, row by row, through the single weight slot.
  void stream_tile(std::int64_t dram0_base, std::int64_t slot) {
    for (std::int64_t r = 0; r < A_; ++r) {
      prog_.push_back(move(MoveDir::Dram0ToLocal, dram0_base + r, slot, 1));
      prog_.push_back(LoadWeights{u32(slot), 1});
    }
  }

  void emit_matmul(const Step& st, const Workspace& w) {
    const LayerSpec& l = *st.layer;
    const LayerTiling& t = *lay_.tiling.find(l.name);
    const auto& q = qw_.at(l.name);
    const std::int64_t M = t.rows, K = t.reduction, N = t.outputs;
    const std::int64_t Tk = t.reduction_tiles, Tn = t.output_tiles;

    const std::int64_t wbase = lay_.weight_base.at(l.name);
    const std::int64_t bbase = lay_.bias_base.at(l.name);
    for (std::int64_t j = 0; j < Tn; ++j) {
      for (std::int64_t tk = 0; tk < Tk; ++tk) {
        for (std::int64_t r = 0; r < A_; ++r) {
          const std::int64_t k = tk * A_ + r;
          for (std::int64_t lane = 0; lane < A_; ++lane) {
            const std::int64_t n = j * A_ + lane;
            if (k < K && n < N) set_const(wbase + (j * Tk + tk) * A_ + r, lane, q.kernel(k, n));
          }
        }
      }
      for (std::int64_t lane = 0; lane < A_ && j * A_ + lane < N; ++lane) {
        set_const(bbase + j, lane, q.bias(j * A_ + lane));
      }
    }

    VectorLayout in = layout(l.inputs.front());
    if (t.im2col) in = emit_im2col(l, t);
    const VectorLayout out = layout(st.output);

    // Output tiles outer, reduction tiles inner, as in t.order.
    for (std::int64_t j = 0; j < Tn; ++j) {
      prog_.push_back(move(MoveDir::Dram0ToLocal, bbase + j, w.w_slot, 1));
      prog_.push_back(move(MoveDir::LocalToAcc, w.w_slot, w.acc_aux, 1));
      for (std::int64_t r0 = 0; r0 < M; r0 += w.block) {
        const std::int64_t mb = std::min(w.block, M - r0);
        for (std::int64_t tk = 0; tk < Tk; ++tk) {
          stream_tile(wbase + (j * Tk + tk) * A_, w.w_slot);
          prog_.push_back(move(MoveDir::Dram1ToLocal, in.base + tk * M + r0, w.in_a, mb));
          prog_.push_back(MatMul{u32(w.in_a), u32(w.acc_out), u32(mb), tk > 0, false});
        }
        prog_.push_back(simd(SimdOp::Add, w.acc_out, w.acc_aux, true, w.acc_out, mb));
        if (st.fused_relu) {
          prog_.push_back(simd(SimdOp::ReluMax0, w.acc_out, std::nullopt, false, w.acc_out, mb));
        }
        prog_.push_back(move(MoveDir::AccToLocal, w.acc_out, w.out, mb));
        prog_.push_back(move(MoveDir::LocalToDram1, w.out, out.base + j * M + r0, mb));
      }
    }
  }

  VectorLayout emit_im2col(const LayerSpec& l, const LayerTiling& t) {
    const VectorLayout src = layout(l.inputs.front());
    const VectorLayout dst{lay_.temp_base.at(l.name), t.rows, t.reduction, A_};
    const auto dims = spatial_dims(l, shape(l.inputs.front()));
    const std::int64_t taps = window_taps(dims);
    const std::int64_t cin = src.cols;
    GatherEmitter ge(prog_, A_);
    for (std::int64_t m = 0; m < t.rows; ++m) {
      for (std::int64_t tap = 0; tap < taps; ++tap) {
        const std::int64_t pos = window_source(dims, m, tap);
        for (std::int64_t c = 0; c < cin; ++c) {
          const std::int64_t d = dst.element_of(m, tap * cin + c);
          if (pos >= 0) {
            ge.copy(MoveDir::Dram1ToDram1, src.element_of(pos, c), d);
          } else {
            ge.copy(MoveDir::Dram0ToDram1, lay_.zero_vector * A_ + d % A_, d);
          }
        }
      }
    }
    ge.flush();
    return dst;
  }

  void emit_avgpool(const Step& st, const Workspace& w) {
    const LayerSpec& l = *st.layer;
    const VectorLayout in = layout(l.inputs.front());
    const VectorLayout out = layout(st.output);
    const std::int64_t wbase = lay_.weight_base.at(l.name);
    const std::int32_t factor = avg_pool_factor(in.rows, fmt_);
    for (std::int64_t r = 0; r < A_; ++r) set_const(wbase + r, r, factor);

    stream_tile(wbase, w.w_slot);
    for (std::int64_t j = 0; j < in.tiles(); ++j) {
      for (std::int64_t r0 = 0; r0 < in.rows; r0 += w.block) {
        const std::int64_t mb = std::min(w.block, in.rows - r0);
        prog_.push_back(move(MoveDir::Dram1ToLocal, in.base + j * in.rows + r0, w.in_a, mb));
        for (std::int64_t r = 0; r < mb; ++r) {
          prog_.push_back(MatMul{u32(w.in_a + r), u32(w.acc_out), 1, r0 + r > 0, false});
        }
      }
      prog_.push_back(move(MoveDir::AccToLocal, w.acc_out, w.out, 1));
      prog_.push_back(move(MoveDir::LocalToDram1, w.out, out.base + j, 1));
    }
  }

  void emit_maxpool(const Step& st, const Workspace& w) {
    const LayerSpec& l = *st.layer;
    const VectorLayout in = layout(l.inputs.front());
    const VectorLayout out = layout(st.output);
    const auto dims = spatial_dims(l, shape(l.inputs.front()));
    const std::int64_t taps = window_taps(dims);
    const std::int64_t O = out.rows;
    const std::int64_t T = out.tiles();
    const std::int64_t wbase = lay_.temp_base.at(l.name);

    // Window i of every output position gathered into its own (O x C) block.
    // Padding taps repeat a valid tap of the same window, which leaves the
    // max unchanged.
    GatherEmitter ge(prog_, std::numeric_limits<std::uint32_t>::max());
    for (std::int64_t i = 0; i < taps; ++i) {
      const VectorLayout win{wbase + i * T * O, O, out.cols, A_};
      for (std::int64_t c0 = 0; c0 < out.cols; c0 += A_) {
        for (std::int64_t o = 0; o < O; ++o) {
          std::int64_t pos = window_source(dims, o, i);
          for (std::int64_t k = 0; pos < 0 && k < taps; ++k) pos = window_source(dims, o, k);
          for (std::int64_t c = c0; c < std::min(c0 + A_, out.cols); ++c) {
            ge.copy(MoveDir::Dram1ToDram1, in.element_of(pos, c), win.element_of(o, c));
          }
        }
      }
    }
    ge.flush();

    for (std::int64_t t = 0; t < T; ++t) {
      for (std::int64_t o0 = 0; o0 < O; o0 += w.block) {
        const std::int64_t ob = std::min(w.block, O - o0);
        for (std::int64_t i = 0; i < taps; ++i) {
          const std::int64_t src = wbase + (i * T + t) * O + o0;
          prog_.push_back(move(MoveDir::Dram1ToLocal, src, w.in_a, ob));
          prog_.push_back(move(MoveDir::LocalToAcc, w.in_a, i == 0 ? w.acc_out : w.acc_aux, ob));
          if (i > 0) prog_.push_back(simd(SimdOp::Max, w.acc_out, w.acc_aux, false, w.acc_out, ob));
        }
        prog_.push_back(move(MoveDir::AccToLocal, w.acc_out, w.out, ob));
        prog_.push_back(move(MoveDir::LocalToDram1, w.out, out.base + t * O + o0, ob));
      }
    }
  }

  void emit_relu(const Step& st, const Workspace& w) {
    const VectorLayout in = layout(st.layer->inputs.front());
    const VectorLayout out = layout(st.output);
    const std::int64_t V = in.vectors();
    for (std::int64_t v0 = 0; v0 < V; v0 += w.block) {
      const std::int64_t nb = std::min(w.block, V - v0);
      prog_.push_back(move(MoveDir::Dram1ToLocal, in.base + v0, w.in_a, nb));
      prog_.push_back(move(MoveDir::LocalToAcc, w.in_a, w.acc_out, nb));
      prog_.push_back(simd(SimdOp::ReluMax0, w.acc_out, std::nullopt, false, w.acc_out, nb));
      prog_.push_back(move(MoveDir::AccToLocal, w.acc_out, w.in_a, nb));
      prog_.push_back(move(MoveDir::LocalToDram1, w.in_a, out.base + v0, nb));
    }
  }

  void emit_add(const Step& st, const Workspace& w) {
    const VectorLayout a = layout(st.layer->inputs[0]);
    const VectorLayout b = layout(st.layer->inputs[1]);
    const VectorLayout out = layout(st.output);
    const std::int64_t V = a.vectors();
    for (std::int64_t v0 = 0; v0 < V; v0 += w.block) {
      const std::int64_t nb = std::min(w.block, V - v0);
      prog_.push_back(move(MoveDir::Dram1ToLocal, a.base + v0, w.in_a, nb));
      prog_.push_back(move(MoveDir::LocalToAcc, w.in_a, w.acc_out, nb));
      prog_.push_back(move(MoveDir::Dram1ToLocal, b.base + v0, w.in_b, nb));
      prog_.push_back(move(MoveDir::LocalToAcc, w.in_b, w.acc_aux, nb));
      prog_.push_back(simd(SimdOp::Add, w.acc_out, w.acc_aux, false, w.acc_out, nb));
      prog_.push_back(move(MoveDir::AccToLocal, w.acc_out, w.in_a, nb));
      prog_.push_back(move(MoveDir::LocalToDram1, w.in_a, out.base + v0, nb));
    }
  }

  void emit_relayout(const Step& st) {
    const VectorLayout in = layout(st.layer->inputs.front());
    const VectorLayout out = layout(st.output);
    GatherEmitter ge(prog_, std::numeric_limits<std::uint32_t>::max());
    // Walk in destination order so runs follow the output tiles.
    for (std::int64_t c0 = 0; c0 < out.cols; c0 += A_) {
      for (std::int64_t r = 0; r < out.rows; ++r) {
        for (std::int64_t c = c0; c < std::min(c0 + A_, out.cols); ++c) {
          const std::int64_t f = r * out.cols + c;
          ge.copy(MoveDir::Dram1ToDram1, in.element_of(f / in.cols, f % in.cols),
                  out.element_of(r, c));
        }
      }
    }
    ge.flush();
  }

  const ModelGraph& g_;
  const ArchConfig& arch_;
  const Layout& lay_;
  std::int64_t A_;
  FixedPointFormat fmt_;
  QWeightStore qw_;
  std::vector<Instruction> prog_;
  std::vector<std::int32_t> constants_;
};

}  // namespace

const char* region_name(Region r) {
  switch (r) {
    case Region::Dram0: return "dram0";
    case Region::Dram1: return "dram1";
    case Region::Local: return "local";
    case Region::Acc: return "acc";
  }
  return "?";
}

const LayerTiling* TilingPlan::find(const std::string& layer) const {
  for (const auto& l : layers) {
    if (l.layer == layer) return &l;
  }
  return nullptr;
}

const Allocation* MemoryPlan::find(const std::string& layer, const std::string& purpose) const {
  for (const auto& a : allocations) {
    if (a.layer == layer && a.purpose == purpose) return &a;
  }
  return nullptr;
}

TilingPlan plan_tiling(const ModelGraph& g, const ArchConfig& arch) {
  require_valid(arch);
  const ShapeMap shapes = infer_shapes(g);
  const std::int64_t A = arch.array_size;
  TilingPlan plan;
  for (const auto& l : g.layers) {
    LayerTiling t;
    t.layer = l.name;
    t.kind = l.kind;
    const TensorShape& in = shapes.at(l.inputs.front());
    if (is_parameterized(l.kind)) {
      const auto [k, n] = kernel_matrix_shape(l, in);
      t.rows = shapes.at(l.name).positions();
      t.reduction = k;
      t.outputs = n;
      t.reduction_tiles = ceil_div(k, A);
      t.output_tiles = ceil_div(n, A);
      t.im2col = needs_im2col(l);
      for (std::int64_t j = 0; j < t.output_tiles; ++j) {
        for (std::int64_t r = 0; r < t.reduction_tiles; ++r) t.order.push_back({j, r});
      }
    } else if (l.kind == LayerKind::GlobalAvgPool) {
      // Each channel tile reduces against a diagonal tile of 1/positions.
      t.rows = in.positions();
      t.reduction = in.channels();
      t.outputs = in.channels();
      t.reduction_tiles = ceil_div(in.channels(), A);
      t.output_tiles = t.reduction_tiles;
      for (std::int64_t j = 0; j < t.output_tiles; ++j) t.order.push_back({j, j});
    } else {
      continue;
    }
    plan.layers.push_back(std::move(t));
  }
  return plan;
}

MemoryPlan allocate(const ModelGraph& g, const ArchConfig& arch, const TilingPlan& plan,
                    ReusePolicy policy) {
  return build_layout(g, arch, plan, policy).plan;
}

Compilation compile(const ModelGraph& g, const ArchConfig& arch, ReusePolicy policy) {
  Compilation c;
  c.tiling = plan_tiling(g, arch);
  const Layout lay = build_layout(g, arch, c.tiling, policy);
  c.memory = lay.plan;
  c.program = Emitter(g, arch, lay).run();
  return c;
}

TcuProgram lower(const ModelGraph& g, const ArchConfig& arch) {
  return compile(g, arch).program;
}

std::int64_t compiled_macs(const TcuProgram& prog) {
  std::int64_t macs = 0;
  const std::int64_t a2 = prog.arch.array_size * prog.arch.array_size;
  for (const auto& i : prog.instructions) {
    if (const auto* m = std::get_if<MatMul>(&i)) macs += std::int64_t{m->row_count} * a2;
  }
  return macs;
}

}  // namespace tcu
