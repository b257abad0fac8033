#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tcu/arch.hpp"
#include "tcu/nnir.hpp"
#include "tcu/tcusim.hpp"

namespace tcu {

inline constexpr int kBeatSamples = 187;
inline constexpr int kNumClasses = 5;

struct BeatRecord {
  Eigen::VectorXd samples;  // kBeatSamples values in [0, 1]
  int label = 0;
};

/// Labeled beats stored row-wise. `ids` tracks record identity through
/// transforms: the source row for loaded and split records, -1 for synthetic
/// beats.
struct Dataset {
  Eigen::MatrixXd samples;  // n x kBeatSamples
  std::vector<int> labels;
  std::vector<std::int64_t> ids;
  std::string provenance;

  // Acquisition metadata of the source recordings; informational only.
  static constexpr int rate_hz = 360;
  static constexpr int resolution_bits = 11;
  static constexpr int range_mv = 10;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  BeatRecord record(std::int64_t i) const;
  std::vector<std::int64_t> class_counts() const;  // kNumClasses entries

  static Dataset from_records(const std::vector<BeatRecord>& records, std::string provenance);
};

/// 188 comma-separated columns per row: kBeatSamples samples, then the label.
Dataset load_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& source);
std::string format_csv(const Dataset& ds);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

struct AugmentConfig {
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

/// Deterministic random source shared by the pipeline: mt19937_64 words,
/// uniform doubles from the top 53 bits, normals by Box-Muller.
class PipelineRng {
 public:
  explicit PipelineRng(std::uint64_t seed);
  double uniform();                      // [0, 1)
  std::int64_t below(std::int64_t n);    // [0, n)
  double normal();                       // N(0, 1)

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// samples' = clamp01(samples + N(0, sigma^2)), drawn record by record.
Dataset add_gaussian_noise(const Dataset& ds, const AugmentConfig& cfg);

/// Oversamples every class below the majority count up to it. Classes absent
/// from `ds` stay absent.
Dataset smote_resample(const Dataset& ds, int k = 5, std::uint64_t seed = 0);

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double train_frac = 0.8,
                                             std::uint64_t seed = 0);

struct MetricsReport {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> confusion;  // true x predicted
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

MetricsReport metrics_from_confusion(
    const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& confusion);

enum class EvalMode { Float, Quant, Compiled };
const char* eval_mode_name(EvalMode m);
EvalMode eval_mode_from_name(const std::string& s);

/// Index of the largest value; the lowest index wins ties.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Logits of one beat under the given mode, as reals.
/// `compiled` is reused by Compiled mode when given; otherwise the graph is
/// compiled for `arch` on each call.
Eigen::VectorXd infer(const ModelGraph& g, const Eigen::VectorXd& beat, EvalMode mode,
                      const ArchConfig& arch, const TcuProgram* compiled = nullptr);

MetricsReport evaluate(const ModelGraph& g, const Dataset& ds, const ArchConfig& arch,
                       EvalMode mode, int workers = 1);

/// Float logits against dequantized fixed-point logits over a dataset.
struct FidelityReport {
  double max_abs_error = 0.0;
  double argmax_agreement = 0.0;
  std::int64_t beats = 0;
};
FidelityReport float_quant_fidelity(const ModelGraph& g, const Dataset& ds,
                                    const ArchConfig& arch, int workers = 1);

struct BenchReport {
  std::int64_t beats = 0;
  int workers = 1;
  double clock_mhz = 0.0;
  std::int64_t macs_graph = 0;
  double mean_cycles = 0.0;
  double latency_ms = 0.0;       // simulated, per inference
  double throughput_gops = 0.0;  // simulated
  double host_ms_per_inference = 0.0;
  SimReport sim;                 // report of the first beat
  MetricsReport metrics;         // on the benchmarked beats
};

BenchReport benchmark(const ModelGraph& g, const Dataset& ds, const ArchConfig& arch,
                      std::int64_t n_beats, int workers = 1);

std::string metrics_json(const MetricsReport& m, int indent = 2);
std::string bench_json(const BenchReport& b, int indent = 2);

}  // namespace tcu
