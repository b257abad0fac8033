#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tcu/quant.hpp"
#include "tcu/tensor.hpp"

namespace tcu {

enum class LayerKind {
  Conv1D,
  Conv2D,
  Dense,
  MaxPool1D,
  MaxPool2D,
  ReLU,
  Add,
  Flatten,
  Reshape,
  GlobalAvgPool,
};

enum class Padding { Valid, Same };

const char* kind_name(LayerKind k);
std::optional<LayerKind> kind_from_name(const std::string& s);
bool is_parameterized(LayerKind k);

/// Name of the pseudo-producer that stands for the graph input.
inline constexpr const char* kGraphInput = "input";

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  std::vector<std::string> inputs;

  // Conv / pool window and stride, one entry per spatial dim.
  std::vector<std::int64_t> kernel;
  std::vector<std::int64_t> stride;
  Padding padding = Padding::Valid;
  std::int64_t filters = 0;  // conv output channels
  std::int64_t units = 0;    // dense output features
  std::vector<std::int64_t> target;  // reshape dims

  static LayerSpec conv1d(std::string name, std::string in, std::int64_t k,
                          std::int64_t filters, std::int64_t stride = 1,
                          Padding pad = Padding::Valid);
  static LayerSpec conv2d(std::string name, std::string in, std::int64_t kh,
                          std::int64_t kw, std::int64_t filters,
                          std::int64_t sh = 1, std::int64_t sw = 1,
                          Padding pad = Padding::Valid);
  static LayerSpec dense(std::string name, std::string in, std::int64_t units);
  static LayerSpec maxpool1d(std::string name, std::string in, std::int64_t k,
                             std::int64_t stride, Padding pad = Padding::Valid);
  static LayerSpec maxpool2d(std::string name, std::string in, std::int64_t kh,
                             std::int64_t kw, std::int64_t sh, std::int64_t sw,
                             Padding pad = Padding::Valid);
  static LayerSpec relu(std::string name, std::string in);
  static LayerSpec add(std::string name, std::string a, std::string b);
  static LayerSpec flatten(std::string name, std::string in);
  static LayerSpec reshape(std::string name, std::string in,
                           std::vector<std::int64_t> target);
  static LayerSpec global_avg_pool(std::string name, std::string in);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Kernel is stored as the lowered (K x N) matrix: row index runs over
/// (kh, kw, in_ch) row-major for convolutions and over input features for
/// Dense; N is the number of output channels.
struct LayerWeights {
  Eigen::MatrixXd kernel;
  Eigen::VectorXd bias;
};

using WeightStore = std::map<std::string, LayerWeights>;
using ShapeMap = std::map<std::string, TensorShape>;

struct ModelGraph {
  std::string name = "model";
  TensorShape input_shape;
  std::vector<LayerSpec> layers;
  std::string output;
  WeightStore weights;

  const LayerSpec* find(const std::string& layer) const;
};

bool structurally_equal(const ModelGraph& a, const ModelGraph& b);

/// Structure, attributes, shapes, and weight shapes. Throws ShapeError or
/// FormatError on the first problem found.
void validate_graph(const ModelGraph& g);

/// Output shape of every layer plus the graph input under kGraphInput.
ShapeMap infer_shapes(const ModelGraph& g);

/// Output shape of one layer from its input shapes.
TensorShape infer_layer_shape(const LayerSpec& l,
                              const std::vector<TensorShape>& in);

/// Padding applied before the first element along one spatial dim.
struct SpatialDim {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad_before = 0;
};
std::vector<SpatialDim> spatial_dims(const LayerSpec& l, const TensorShape& in);

std::int64_t window_outputs(const std::vector<SpatialDim>& dims);
std::int64_t window_taps(const std::vector<SpatialDim>& dims);
/// Flat input position read by kernel tap `tap` of flat output position
/// `out`, or -1 when the tap falls in the padding.
std::int64_t window_source(const std::vector<SpatialDim>& dims, std::int64_t out,
                           std::int64_t tap);

/// (K, N) of the lowered weight matrix.
std::pair<std::int64_t, std::int64_t> kernel_matrix_shape(
    const LayerSpec& l, const TensorShape& in);

struct LayerCost {
  std::string name;
  std::int64_t macs = 0;
  std::int64_t params = 0;
};

struct CostReport {
  std::int64_t total_macs = 0;
  std::int64_t total_params = 0;
  std::vector<LayerCost> per_layer;
};

CostReport count_macs(const ModelGraph& g);

/// Tally of scalar multiplies performed by the float executor.
struct MulCounter {
  std::int64_t multiplies = 0;
};

/// Double-precision reference forward pass.
TensorF execute_float(const ModelGraph& g, const TensorF& input,
                      MulCounter* counter = nullptr);

/// Fixed-point weights in storage format, same layout as LayerWeights.
struct QuantizedWeights {
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> kernel;
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, 1> bias;
};
using QWeightStore = std::map<std::string, QuantizedWeights>;

QWeightStore quantize_weights(const ModelGraph& g, const FixedPointFormat& fmt);

/// Fixed-point reference forward pass; the oracle for compiled programs.
QTensor execute_quant(const ModelGraph& g, const QTensor& input);

/// GlobalAvgPool multiplies each position by this raw reciprocal.
std::int32_t avg_pool_factor(std::int64_t positions, const FixedPointFormat& fmt);

// Model files: text manifest plus a little-endian float64 weight blob next to
// it (see docs/formats.md).
ModelGraph load_model(const std::filesystem::path& manifest);
void save_model(const ModelGraph& g, const std::filesystem::path& manifest);

}  // namespace tcu
