#include "tcu/isa.hpp"

#include <sstream>

#include "tcu/error.hpp"

namespace tcu {

// Record layout (16 bytes, little-endian):
//   [0]      opcode
//   [1]      flags
//   [2..5]   operand 0
//   [6..9]   operand 1
//   [10..13] operand 2
//   [14..15] SIMD vector count (zero for every other opcode)
//
// Flags per opcode:
//   MatMul    bit0 accumulate, bit1 zero_weights
//   DataMove  bits0-3 direction, bit4 elementwise
//   SIMD      bits0-2 op, bit3 has operand b, bit4 broadcast b

namespace {

constexpr std::uint8_t kMatMulAccumulate = 0x01;
constexpr std::uint8_t kMatMulZeroWeights = 0x02;
constexpr std::uint8_t kMoveDirMask = 0x0f;
constexpr std::uint8_t kMoveElementwise = 0x10;
constexpr std::uint8_t kSimdOpMask = 0x07;
constexpr std::uint8_t kSimdHasB = 0x08;
constexpr std::uint8_t kSimdBroadcastB = 0x10;

void put_u32(EncodedInstruction& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(std::span<const std::uint8_t, kInstructionBytes> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[at + i]} << (8 * i);
  return v;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

Opcode opcode(const Instruction& i) {
  return std::visit(overloaded{
                        [](const NoOp&) { return Opcode::NoOp; },
                        [](const LoadWeights&) { return Opcode::LoadWeights; },
                        [](const MatMul&) { return Opcode::MatMul; },
                        [](const DataMove&) { return Opcode::DataMove; },
                        [](const Simd&) { return Opcode::Simd; },
                    },
                    i);
}

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::NoOp: return "NoOp";
    case Opcode::LoadWeights: return "LoadWeights";
    case Opcode::MatMul: return "MatMul";
    case Opcode::DataMove: return "DataMove";
    case Opcode::Simd: return "SIMD";
  }
  return "?";
}

const char* move_dir_name(MoveDir d) {
  switch (d) {
    case MoveDir::Dram0ToLocal: return "dram0->local";
    case MoveDir::Dram1ToLocal: return "dram1->local";
    case MoveDir::LocalToDram1: return "local->dram1";
    case MoveDir::AccToLocal: return "acc->local";
    case MoveDir::LocalToAcc: return "local->acc";
    case MoveDir::Dram1ToDram1: return "dram1->dram1";
    case MoveDir::Dram0ToDram1: return "dram0->dram1";
  }
  return "?";
}

const char* simd_op_name(SimdOp op) {
  switch (op) {
    case SimdOp::Move: return "move";
    case SimdOp::ReluMax0: return "relu_max0";
    case SimdOp::Add: return "add";
    case SimdOp::Max: return "max";
  }
  return "?";
}

bool touches_dram(MoveDir d) {
  return d != MoveDir::AccToLocal && d != MoveDir::LocalToAcc;
}

EncodedInstruction encode(const Instruction& instr) {
  EncodedInstruction b{};
  b[0] = static_cast<std::uint8_t>(opcode(instr));
  std::visit(overloaded{
                 [](const NoOp&) {},
                 [&](const LoadWeights& x) {
                   put_u32(b, 2, x.local_addr);
                   put_u32(b, 6, x.row_count);
                 },
                 [&](const MatMul& x) {
                   b[1] = static_cast<std::uint8_t>((x.accumulate ? kMatMulAccumulate : 0) |
                                                    (x.zero_weights ? kMatMulZeroWeights : 0));
                   put_u32(b, 2, x.local_in);
                   put_u32(b, 6, x.acc_addr);
                   put_u32(b, 10, x.row_count);
                 },
                 [&](const DataMove& x) {
                   b[1] = static_cast<std::uint8_t>(static_cast<std::uint8_t>(x.dir) |
                                                    (x.elementwise ? kMoveElementwise : 0));
                   put_u32(b, 2, x.src);
                   put_u32(b, 6, x.dst);
                   put_u32(b, 10, x.count);
                 },
                 [&](const Simd& x) {
                   b[1] = static_cast<std::uint8_t>(static_cast<std::uint8_t>(x.op) |
                                                    (x.src_b ? kSimdHasB : 0) |
                                                    (x.broadcast_b ? kSimdBroadcastB : 0));
                   put_u32(b, 2, x.src_a);
                   put_u32(b, 6, x.src_b.value_or(0));
                   put_u32(b, 10, x.dst);
                   b[14] = static_cast<std::uint8_t>(x.count & 0xff);
                   b[15] = static_cast<std::uint8_t>(x.count >> 8);
                 },
             },
             instr);
  return b;
}

Instruction decode(std::span<const std::uint8_t, kInstructionBytes> b) {
  const std::uint8_t flags = b[1];
  const bool tail_zero = b[14] == 0 && b[15] == 0;
  auto bad = [&](const std::string& why) -> FormatError {
    return FormatError("bad instruction record (opcode " + std::to_string(b[0]) +
                       "): " + why);
  };
  switch (b[0]) {
    case static_cast<std::uint8_t>(Opcode::NoOp):
      for (std::size_t i = 1; i < kInstructionBytes; ++i) {
        if (b[i] != 0) throw bad("NoOp operands must be zero");
      }
      return NoOp{};
    case static_cast<std::uint8_t>(Opcode::LoadWeights):
      if (flags != 0 || !tail_zero || get_u32(b, 10) != 0) throw bad("unused fields set");
      return LoadWeights{get_u32(b, 2), get_u32(b, 6)};
    case static_cast<std::uint8_t>(Opcode::MatMul):
      if ((flags & ~(kMatMulAccumulate | kMatMulZeroWeights)) != 0 || !tail_zero) {
        throw bad("unused fields set");
      }
      return MatMul{get_u32(b, 2), get_u32(b, 6), get_u32(b, 10),
                    (flags & kMatMulAccumulate) != 0, (flags & kMatMulZeroWeights) != 0};
    case static_cast<std::uint8_t>(Opcode::DataMove): {
      const std::uint8_t dir = flags & kMoveDirMask;
      if (dir > static_cast<std::uint8_t>(MoveDir::Dram0ToDram1)) throw bad("unknown direction");
      if ((flags & ~(kMoveDirMask | kMoveElementwise)) != 0 || !tail_zero) {
        throw bad("unused fields set");
      }
      return DataMove{static_cast<MoveDir>(dir), (flags & kMoveElementwise) != 0,
                      get_u32(b, 2), get_u32(b, 6), get_u32(b, 10)};
    }
    case static_cast<std::uint8_t>(Opcode::Simd): {
      const std::uint8_t op = flags & kSimdOpMask;
      if (op > static_cast<std::uint8_t>(SimdOp::Max)) throw bad("unknown SIMD op");
      if ((flags & ~(kSimdOpMask | kSimdHasB | kSimdBroadcastB)) != 0) {
        throw bad("unused flags set");
      }
      Simd s;
      s.op = static_cast<SimdOp>(op);
      s.src_a = get_u32(b, 2);
      if (flags & kSimdHasB) {
        s.src_b = get_u32(b, 6);
      } else if (get_u32(b, 6) != 0) {
        throw bad("operand b set without flag");
      }
      s.broadcast_b = (flags & kSimdBroadcastB) != 0;
      s.dst = get_u32(b, 10);
      s.count = static_cast<std::uint16_t>(b[14] | (b[15] << 8));
      return s;
    }
    default:
      throw bad("unknown opcode");
  }
}

std::vector<std::uint8_t> encode_program(const std::vector<Instruction>& prog) {
  std::vector<std::uint8_t> out;
  out.reserve(prog.size() * kInstructionBytes);
  for (const auto& i : prog) {
    const auto rec = encode(i);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

std::vector<Instruction> decode_program(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kInstructionBytes != 0) {
    throw FormatError("program stream length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  std::vector<Instruction> prog;
  prog.reserve(bytes.size() / kInstructionBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kInstructionBytes) {
    prog.push_back(decode(bytes.subspan(off).first<kInstructionBytes>()));
  }
  return prog;
}

std::string to_string(const Instruction& instr) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const NoOp&) { os << "NoOp"; },
                 [&](const LoadWeights& x) {
                   os << "LoadWeights local=" << x.local_addr << " rows=" << x.row_count;
                 },
                 [&](const MatMul& x) {
                   os << "MatMul local=" << x.local_in << " acc=" << x.acc_addr
                      << " rows=" << x.row_count << (x.accumulate ? " accumulate" : "")
                      << (x.zero_weights ? " zero_weights" : "");
                 },
                 [&](const DataMove& x) {
                   os << "DataMove " << move_dir_name(x.dir)
                      << (x.elementwise ? " elements" : "") << " src=" << x.src
                      << " dst=" << x.dst << " count=" << x.count;
                 },
                 [&](const Simd& x) {
                   os << "SIMD " << simd_op_name(x.op) << " a=" << x.src_a;
                   if (x.src_b) os << " b=" << *x.src_b << (x.broadcast_b ? "(bcast)" : "");
                   os << " dst=" << x.dst << " count=" << x.count;
                 },
             },
             instr);
  return os.str();
}

}  // namespace tcu
