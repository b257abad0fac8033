#include "tcu/tcusim.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "tcu/error.hpp"

namespace tcu {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

[[noreturn]] void fail(const TcuState& s, const Instruction& instr, const std::string& why) {
  throw SimError(s.pc, "pc " + std::to_string(s.pc) + ": " + why + " [" + to_string(instr) + "]");
}

template <typename T>
void check_vectors(const TcuState& s, const Instruction& instr, const VectorMemory<T>& m,
                   std::int64_t base, std::int64_t count) {
  if (count < 1) fail(s, instr, "vector count must be >= 1");
  if (base + count > m.depth()) {
    fail(s, instr,
         std::string(m.name()) + " range [" + std::to_string(base) + ", " +
             std::to_string(base + count) + ") exceeds depth " + std::to_string(m.depth()));
  }
}

template <typename T>
void check_elements(const TcuState& s, const Instruction& instr, const VectorMemory<T>& m,
                    std::int64_t base, std::int64_t count) {
  if (count < 1) fail(s, instr, "element count must be >= 1");
  if (base + count > m.depth() * m.lanes()) {
    fail(s, instr, std::string(m.name()) + " element range exceeds depth");
  }
}

template <typename Src, typename Dst, typename F>
void copy(const TcuState& s, const Instruction& instr, const DataMove& dm,
          const VectorMemory<Src>& src, VectorMemory<Dst>& dst, F convert) {
  const std::int64_t A = s.arch.array_size;
  std::int64_t from = dm.src, to = dm.dst, n = dm.count;
  if (dm.elementwise) {
    check_elements(s, instr, src, from, n);
    check_elements(s, instr, dst, to, n);
  } else {
    check_vectors(s, instr, src, from, n);
    check_vectors(s, instr, dst, to, n);
    from *= A;
    to *= A;
    n *= A;
  }
  // Forward element order; the compiler never emits overlapping moves.
  for (std::int64_t i = 0; i < n; ++i) dst.set(to + i, convert(src.get(from + i)));
}

void exec(TcuState& s, const Instruction& instr, const LoadWeights& lw) {
  const std::int64_t A = s.arch.array_size;
  check_vectors(s, instr, s.local, lw.local_addr, lw.row_count);
  for (std::int64_t r = 0; r < lw.row_count; ++r) {
    for (std::int64_t k = 0; k + 1 < A; ++k) s.weights.row(k) = s.weights.row(k + 1);
    for (std::int64_t j = 0; j < A; ++j) {
      s.weights(A - 1, j) = s.local.get((lw.local_addr + r) * A + j);
    }
  }
  s.weights_loaded = true;
}

void exec(TcuState& s, const Instruction& instr, const MatMul& mm) {
  const std::int64_t A = s.arch.array_size;
  check_vectors(s, instr, s.local, mm.local_in, mm.row_count);
  check_vectors(s, instr, s.acc, mm.acc_addr, mm.row_count);
  if (!mm.zero_weights && !s.weights_loaded) fail(s, instr, "MatMul before any LoadWeights");
  std::vector<std::int32_t> x(static_cast<std::size_t>(A));
  for (std::int64_t i = 0; i < mm.row_count; ++i) {
    for (std::int64_t k = 0; k < A; ++k) {
      x[static_cast<std::size_t>(k)] = s.local.get((mm.local_in + i) * A + k);
    }
    for (std::int64_t j = 0; j < A; ++j) {
      const std::int64_t e = (mm.acc_addr + i) * A + j;
      std::int64_t y = mm.accumulate ? s.acc.get(e) : 0;
      if (!mm.zero_weights) {
        for (std::int64_t k = 0; k < A; ++k) {
          y = mac_acc(y, x[static_cast<std::size_t>(k)], s.weights(k, j), s.format);
        }
      }
      s.acc.set(e, y);
    }
  }
}

void exec(TcuState& s, const Instruction& instr, const DataMove& dm) {
  const auto& f = s.format;
  auto same = [](auto v) { return v; };
  switch (dm.dir) {
    case MoveDir::Dram0ToLocal: copy(s, instr, dm, s.dram0, s.local, same); break;
    case MoveDir::Dram1ToLocal: copy(s, instr, dm, s.dram1, s.local, same); break;
    case MoveDir::LocalToDram1: copy(s, instr, dm, s.local, s.dram1, same); break;
    case MoveDir::Dram1ToDram1: copy(s, instr, dm, s.dram1, s.dram1, same); break;
    case MoveDir::Dram0ToDram1: copy(s, instr, dm, s.dram0, s.dram1, same); break;
    case MoveDir::AccToLocal:
      copy(s, instr, dm, s.acc, s.local, [&](std::int64_t v) { return rescale(v, f); });
      break;
    case MoveDir::LocalToAcc:
      copy(s, instr, dm, s.local, s.acc, [&](std::int32_t v) { return widen(v, f); });
      break;
  }
}

void exec(TcuState& s, const Instruction& instr, const Simd& op) {
  const std::int64_t A = s.arch.array_size;
  const std::int64_t n = op.count;
  check_vectors(s, instr, s.acc, op.src_a, n);
  check_vectors(s, instr, s.acc, op.dst, n);
  const bool binary = op.op == SimdOp::Add || op.op == SimdOp::Max;
  if (binary != op.src_b.has_value()) fail(s, instr, "operand b mismatch for SIMD op");
  if (op.src_b) check_vectors(s, instr, s.acc, *op.src_b, op.broadcast_b ? 1 : n);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < A; ++j) {
      const std::int64_t a = s.acc.get((op.src_a + i) * A + j);
      std::int64_t b = 0;
      if (op.src_b) b = s.acc.get((*op.src_b + (op.broadcast_b ? 0 : i)) * A + j);
      std::int64_t r = a;
      switch (op.op) {
        case SimdOp::Move: break;
        case SimdOp::ReluMax0: r = std::max<std::int64_t>(a, 0); break;
        case SimdOp::Add: r = acc_add(a, b, s.format); break;
        case SimdOp::Max: r = std::max(a, b); break;
      }
      s.acc.set((op.dst + i) * A + j, r);
    }
  }
}

void exec(TcuState&, const Instruction&, const NoOp&) {}

bool is_compute(const Instruction& i) {
  return std::holds_alternative<LoadWeights>(i) || std::holds_alternative<MatMul>(i) ||
         std::holds_alternative<Simd>(i);
}

}  // namespace

TcuState::TcuState(const ArchConfig& a)
    : arch(a),
      format(FixedPointFormat::from_arch(a)),
      dram0("dram0", a.dram0_depth, a.array_size),
      dram1("dram1", a.dram1_depth, a.array_size),
      local("local", a.local_depth, a.array_size),
      acc("acc", a.acc_depth, a.array_size),
      weights(decltype(weights)::Zero(a.array_size, a.array_size)) {}

std::int64_t instruction_cycles(const Instruction& instr, const ArchConfig& arch) {
  const std::int64_t A = arch.array_size;
  if (const auto* lw = std::get_if<LoadWeights>(&instr)) return std::int64_t{lw->row_count} + 1;
  if (const auto* mm = std::get_if<MatMul>(&instr)) return std::int64_t{mm->row_count} + A;
  if (const auto* dm = std::get_if<DataMove>(&instr)) {
    const std::int64_t vecs = dm->elementwise ? ceil_div(dm->count, A) : dm->count;
    return vecs * (touches_dram(dm->dir) ? arch.dram_latency_factor : 1);
  }
  if (const auto* op = std::get_if<Simd>(&instr)) return op->count;
  return 1;
}

std::int64_t step(TcuState& state, const Instruction& instr) {
  std::visit([&](const auto& x) { exec(state, instr, x); }, instr);
  return instruction_cycles(instr, state.arch);
}

double latency_ms(std::int64_t cycles, double clock_mhz) {
  return static_cast<double>(cycles) / (clock_mhz * 1000.0);
}

double throughput_gops(std::int64_t macs, std::int64_t cycles, double clock_mhz) {
  if (cycles == 0) return 0.0;
  const double seconds = static_cast<double>(cycles) / (clock_mhz * 1e6);
  return 2.0 * static_cast<double>(macs) / seconds / 1e9;
}

SimReport make_report(const TcuProgram& prog) {
  SimReport r;
  r.clock_mhz = prog.arch.clock_mhz;
  r.macs_graph = prog.graph_macs;
  for (const auto& i : prog.instructions) {
    const std::int64_t c = instruction_cycles(i, prog.arch);
    auto& t = r.per_class[opcode_name(opcode(i))];
    ++t.count;
    t.cycles += c;
    r.total_cycles += c;
    if (is_compute(i)) r.compute_cycles += c;
    if (std::holds_alternative<DataMove>(i)) r.move_cycles += c;
  }
  r.macs_executed = compiled_macs(prog);
  r.efficiency = r.macs_executed == 0
                     ? 1.0
                     : static_cast<double>(r.macs_graph) / static_cast<double>(r.macs_executed);
  r.latency_ms = latency_ms(r.total_cycles, r.clock_mhz);
  r.throughput_gops = throughput_gops(r.macs_graph, r.total_cycles, r.clock_mhz);
  r.overlap_lower_bound = std::max(r.compute_cycles, r.move_cycles);
  return r;
}

SimResult run(const TcuProgram& prog, const QTensor& input) {
  if (!(input.shape() == prog.input.shape)) {
    throw ShapeError("input shape " + input.shape().str() + " does not match program input " +
                     prog.input.shape.str());
  }
  const std::int64_t A = prog.arch.array_size;
  TcuState s(prog.arch);
  if (static_cast<std::int64_t>(prog.constants.size()) > s.dram0.depth() * A) {
    throw SimError(0, "constants exceed dram0 depth");
  }
  for (std::size_t i = 0; i < prog.constants.size(); ++i) {
    s.dram0.set(static_cast<std::int64_t>(i), prog.constants[i]);
  }
  const VectorLayout in = VectorLayout::of(prog.input.shape, prog.input.base, A);
  for (std::int64_t r = 0; r < in.rows; ++r) {
    for (std::int64_t c = 0; c < in.cols; ++c) {
      s.dram1.set(in.element_of(r, c), input[r * in.cols + c]);
    }
  }

  for (s.pc = 0; s.pc < prog.instructions.size(); ++s.pc) step(s, prog.instructions[s.pc]);

  SimResult res;
  res.output.format = s.format;
  res.output.values = Tensor<std::int32_t>(prog.output.shape);
  const VectorLayout out = VectorLayout::of(prog.output.shape, prog.output.base, A);
  for (std::int64_t r = 0; r < out.rows; ++r) {
    for (std::int64_t c = 0; c < out.cols; ++c) {
      res.output.values[r * out.cols + c] = s.dram1.get(out.element_of(r, c));
    }
  }
  res.report = make_report(prog);
  return res;
}

std::string report_json(const SimReport& rep, int indent) {
  nlohmann::ordered_json j;
  j["total_cycles"] = rep.total_cycles;
  j["clock_mhz"] = rep.clock_mhz;
  j["latency_ms"] = rep.latency_ms;
  j["throughput_gops"] = rep.throughput_gops;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (const auto& [name, t] : rep.per_class) {
    classes[name] = {{"count", t.count}, {"cycles", t.cycles}};
  }
  j["per_class"] = classes;
  j["macs_graph"] = rep.macs_graph;
  j["macs_executed"] = rep.macs_executed;
  j["efficiency"] = rep.efficiency;
  j["compute_cycles"] = rep.compute_cycles;
  j["move_cycles"] = rep.move_cycles;
  j["overlap_lower_bound"] = rep.overlap_lower_bound;
  return j.dump(indent);
}

std::string report_text(const SimReport& rep) {
  std::ostringstream os;
  os << "cycles           " << rep.total_cycles << "\n";
  os << "clock            " << rep.clock_mhz << " MHz\n";
  os << "latency          " << rep.latency_ms << " ms\n";
  os << "throughput       " << rep.throughput_gops << " GOP/s\n";
  os << "macs (graph)     " << rep.macs_graph << "\n";
  os << "macs (executed)  " << rep.macs_executed << "\n";
  os << "efficiency       " << rep.efficiency << "\n";
  os << "compute / move   " << rep.compute_cycles << " / " << rep.move_cycles << "\n";
  for (const auto& [name, t] : rep.per_class) {
    os << "  " << name << ": " << t.count << " instr, " << t.cycles << " cycles\n";
  }
  return os.str();
}

}  // namespace tcu
