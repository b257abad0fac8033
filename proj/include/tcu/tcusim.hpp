#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tcu/arch.hpp"
#include "tcu/compiler.hpp"
#include "tcu/isa.hpp"
#include "tcu/quant.hpp"

namespace tcu {

/// A vector memory of `depth` vectors with `lanes` values each. Storage grows
/// on first write; unwritten addresses read as zero, exactly as a zeroed
/// memory of the full depth would.
template <typename T>
class VectorMemory {
 public:
  VectorMemory(const char* name, std::int64_t depth, std::int64_t lanes)
      : name_(name), depth_(depth), lanes_(lanes) {}

  const char* name() const { return name_; }
  std::int64_t depth() const { return depth_; }
  std::int64_t lanes() const { return lanes_; }
  /// Elements currently backed by storage.
  std::int64_t backed() const { return static_cast<std::int64_t>(data_.size()); }

  T get(std::int64_t element) const {
    return element < backed() ? data_[static_cast<std::size_t>(element)] : T{0};
  }
  void set(std::int64_t element, T v) {
    if (element >= backed()) data_.resize(static_cast<std::size_t>(element + 1), T{0});
    data_[static_cast<std::size_t>(element)] = v;
  }

 private:
  const char* name_;
  std::int64_t depth_;
  std::int64_t lanes_;
  std::vector<T> data_;
};

struct TcuState {
  explicit TcuState(const ArchConfig& arch);

  ArchConfig arch;
  FixedPointFormat format;
  VectorMemory<std::int32_t> dram0;
  VectorMemory<std::int32_t> dram1;
  VectorMemory<std::int32_t> local;
  VectorMemory<std::int64_t> acc;
  /// Weight tile, row k feeds input lane k; column j feeds output lane j.
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> weights;
  bool weights_loaded = false;
  std::size_t pc = 0;
};

/// Cycle cost of one instruction under the sequential cost table.
std::int64_t instruction_cycles(const Instruction& instr, const ArchConfig& arch);

/// Executes one instruction; returns its cycles. Throws SimError on bad
/// addresses or a MatMul without loaded weights.
std::int64_t step(TcuState& state, const Instruction& instr);

struct ClassTally {
  std::int64_t count = 0;
  std::int64_t cycles = 0;
  friend bool operator==(const ClassTally&, const ClassTally&) = default;
};

struct SimReport {
  std::int64_t total_cycles = 0;
  double clock_mhz = 100.0;
  double latency_ms = 0.0;
  double throughput_gops = 0.0;
  std::map<std::string, ClassTally> per_class;  // keyed by opcode name
  std::int64_t macs_graph = 0;
  std::int64_t macs_executed = 0;
  double efficiency = 1.0;
  std::int64_t compute_cycles = 0;  // LoadWeights, MatMul, SIMD
  std::int64_t move_cycles = 0;     // DataMove
  /// max(compute, move): a bound for a schedule that overlaps the two.
  std::int64_t overlap_lower_bound = 0;

  friend bool operator==(const SimReport&, const SimReport&) = default;
};

double latency_ms(std::int64_t cycles, double clock_mhz);
double throughput_gops(std::int64_t macs, std::int64_t cycles, double clock_mhz);

/// Report for a program whose per-instruction cycles have been tallied.
SimReport make_report(const TcuProgram& prog);

struct SimResult {
  QTensor output;
  SimReport report;
};

/// Loads constants and input, executes the program, reads the output.
SimResult run(const TcuProgram& prog, const QTensor& input);

std::string report_json(const SimReport& rep, int indent = 2);
std::string report_text(const SimReport& rep);

}  // namespace tcu
