#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tcu/arch.hpp"
#include "tcu/isa.hpp"
#include "tcu/nnir.hpp"
#include "tcu/quant.hpp"

namespace tcu {

/// Placement of a tensor in a vector memory. A tensor is viewed as a
/// (rows x cols) matrix: rows = spatial positions, cols = channels. Storage is
/// tile-major: the cols are cut into ceil(cols / lanes) tiles and tile t holds
/// rows 0..rows-1 as consecutive vectors.
struct VectorLayout {
  std::int64_t base = 0;
  std::int64_t rows = 1;
  std::int64_t cols = 1;
  std::int64_t lanes = 8;

  static VectorLayout of(const TensorShape& s, std::int64_t base, std::int64_t lanes) {
    return {base, s.positions(), s.channels(), lanes};
  }
  std::int64_t tiles() const { return (cols + lanes - 1) / lanes; }
  std::int64_t vectors() const { return tiles() * rows; }
  std::int64_t vector_of(std::int64_t r, std::int64_t c) const {
    return base + (c / lanes) * rows + r;
  }
  std::int64_t element_of(std::int64_t r, std::int64_t c) const {
    return vector_of(r, c) * lanes + c % lanes;
  }
  friend bool operator==(const VectorLayout&, const VectorLayout&) = default;
};

struct TileCoord {
  std::int64_t out_tile = 0;
  std::int64_t red_tile = 0;
  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

/// Matmul view of one layer: an (rows x reduction) input against a
/// (reduction x outputs) weight matrix, cut into array_size tiles.
struct LayerTiling {
  std::string layer;
  LayerKind kind = LayerKind::Dense;
  std::int64_t rows = 0;       // M: im2col patches (1 for Dense)
  std::int64_t reduction = 0;  // K
  std::int64_t outputs = 0;    // N
  std::int64_t reduction_tiles = 0;
  std::int64_t output_tiles = 0;
  bool im2col = false;
  std::vector<TileCoord> order;  // traversal, row-major over (out, red)
};

struct TilingPlan {
  std::vector<LayerTiling> layers;  // only layers that run on the array
  const LayerTiling* find(const std::string& layer) const;
};

TilingPlan plan_tiling(const ModelGraph& g, const ArchConfig& arch);

enum class Region { Dram0 = 0, Dram1 = 1, Local = 2, Acc = 3 };
const char* region_name(Region r);

/// One allocation, live over compile steps [first_step, last_step].
/// Step -1 is the host writing the input.
struct Allocation {
  std::string layer;
  std::string purpose;
  Region region = Region::Dram1;
  std::int64_t base = 0;
  std::int64_t extent = 0;
  std::int64_t first_step = 0;
  std::int64_t last_step = 0;
};

enum class ReusePolicy { Liveness, None };

/// A compile step is one emitted layer operation. Fused producer+ReLU pairs
/// and layout-preserving reshapes collapse into a single step or none.
struct StepInfo {
  std::string layer;       // the layer whose semantics the step implements
  std::string output;      // value produced (a fused ReLU's name)
  bool fused_relu = false;
  std::int64_t row_block = 0;  // rows processed per pass on the array
};

struct MemoryPlan {
  std::vector<StepInfo> steps;
  std::vector<Allocation> allocations;
  std::array<std::int64_t, 4> peak{};  // indexed by Region

  std::int64_t peak_of(Region r) const { return peak[static_cast<std::size_t>(r)]; }
  const Allocation* find(const std::string& layer, const std::string& purpose) const;
};

MemoryPlan allocate(const ModelGraph& g, const ArchConfig& arch, const TilingPlan& plan,
                    ReusePolicy policy = ReusePolicy::Liveness);

struct IoBinding {
  TensorShape shape;
  std::int64_t base = 0;  // dram1 vector address
  friend bool operator==(const IoBinding&, const IoBinding&) = default;
};

struct TcuProgram {
  std::string model_name;
  ArchConfig arch;
  std::vector<Instruction> instructions;
  IoBinding input;
  IoBinding output;
  /// dram0 image loaded before the run, array_size raw values per vector.
  std::vector<std::int32_t> constants;
  /// MAC count of the source graph (not of the padded tiles).
  std::int64_t graph_macs = 0;

  FixedPointFormat format() const { return FixedPointFormat::from_arch(arch); }
};

struct Compilation {
  TilingPlan tiling;
  MemoryPlan memory;
  TcuProgram program;
};

Compilation compile(const ModelGraph& g, const ArchConfig& arch,
                    ReusePolicy policy = ReusePolicy::Liveness);
TcuProgram lower(const ModelGraph& g, const ArchConfig& arch);

/// Sum over MatMul of row_count * array_size^2.
std::int64_t compiled_macs(const TcuProgram& prog);

/// The compiled trio: text manifest (.tmodel), instruction records (.tprog),
/// fixed-point constants (.tdata).
struct ArtifactBundle {
  std::string manifest;
  std::vector<std::uint8_t> program;
  std::vector<std::uint8_t> constants;
};

ArtifactBundle emit(const TcuProgram& prog, const ModelGraph& g);
/// Verifies the checksum and decodes; runs under the bundle's own arch.
TcuProgram load_bundle(const ArtifactBundle& bundle);
/// Same, but refuses bundles whose datapath differs from `runtime`.
TcuProgram load_bundle(const ArtifactBundle& bundle, const ArchConfig& runtime);

std::uint32_t bundle_checksum(const std::vector<std::uint8_t>& program,
                              const std::vector<std::uint8_t>& constants);

/// Writes <dir>/<stem>.tmodel, .tprog, .tdata; returns the manifest path.
std::filesystem::path write_bundle(const ArtifactBundle& b, const std::filesystem::path& dir,
                                   const std::string& stem);
ArtifactBundle read_bundle(const std::filesystem::path& manifest);

std::vector<std::uint8_t> encode_constants(const std::vector<std::int32_t>& raw,
                                           const FixedPointFormat& fmt);
std::vector<std::int32_t> decode_constants(const std::vector<std::uint8_t>& bytes,
                                           const FixedPointFormat& fmt);

}  // namespace tcu
