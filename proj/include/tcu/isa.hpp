#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tcu {

enum class Opcode : std::uint8_t {
  NoOp = 0,
  LoadWeights = 1,
  MatMul = 2,
  DataMove = 3,
  Simd = 4,
};

enum class MoveDir : std::uint8_t {
  Dram0ToLocal = 0,
  Dram1ToLocal = 1,
  LocalToDram1 = 2,
  AccToLocal = 3,    // rescale to storage width
  LocalToAcc = 4,    // widen to accumulator scale
  Dram1ToDram1 = 5,  // relayout (im2col, flatten, pooling windows)
  Dram0ToDram1 = 6,  // constant fill
};

enum class SimdOp : std::uint8_t {
  Move = 0,
  ReluMax0 = 1,
  Add = 2,
  Max = 3,
};

/// Pushes `row_count` local vectors into the weight tile. The tile behaves as
/// a shift register: each pushed vector enters as the last row and the first
/// row falls out, so after pushing array_size rows r0..rN-1, tile row i = ri.
struct LoadWeights {
  std::uint32_t local_addr = 0;
  std::uint32_t row_count = 0;
  friend bool operator==(const LoadWeights&, const LoadWeights&) = default;
};

/// acc[acc_addr + i] (+)= local[local_in + i] x tile for i < row_count.
struct MatMul {
  std::uint32_t local_in = 0;
  std::uint32_t acc_addr = 0;
  std::uint32_t row_count = 0;
  bool accumulate = false;
  bool zero_weights = false;
  friend bool operator==(const MatMul&, const MatMul&) = default;
};

/// Copies `count` vectors, or `count` scalar elements when `elementwise`
/// (addresses are then element indices: vector * array_size + lane).
struct DataMove {
  MoveDir dir = MoveDir::Dram0ToLocal;
  bool elementwise = false;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t count = 0;
  friend bool operator==(const DataMove&, const DataMove&) = default;
};

/// Lane-wise op over accumulator vectors: dst[i] = op(a[i], b[i or 0]).
struct Simd {
  SimdOp op = SimdOp::Move;
  std::uint32_t src_a = 0;
  std::optional<std::uint32_t> src_b;
  bool broadcast_b = false;
  std::uint32_t dst = 0;
  std::uint16_t count = 0;
  friend bool operator==(const Simd&, const Simd&) = default;
};

struct NoOp {
  friend bool operator==(const NoOp&, const NoOp&) = default;
};

using Instruction = std::variant<NoOp, LoadWeights, MatMul, DataMove, Simd>;

inline constexpr std::size_t kInstructionBytes = 16;
using EncodedInstruction = std::array<std::uint8_t, kInstructionBytes>;

Opcode opcode(const Instruction& i);
const char* opcode_name(Opcode op);
const char* move_dir_name(MoveDir d);
const char* simd_op_name(SimdOp op);

bool touches_dram(MoveDir d);

EncodedInstruction encode(const Instruction& instr);
Instruction decode(std::span<const std::uint8_t, kInstructionBytes> bytes);

std::vector<std::uint8_t> encode_program(const std::vector<Instruction>& prog);
std::vector<Instruction> decode_program(std::span<const std::uint8_t> bytes);

std::string to_string(const Instruction& instr);

}  // namespace tcu
