#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "tcu/compiler.hpp"
#include "tcu/ecg.hpp"
#include "tcu/error.hpp"

namespace tcu {

namespace {

/// Runs fn(i) for i in [0, n) on `workers` threads, beat i on worker i % workers.
/// Results go to per-index slots, so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(std::int64_t n, int workers, F fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::int64_t>(n, 1))));
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::int64_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void check_model(const ModelGraph& g) {
  const ShapeMap shapes = infer_shapes(g);
  if (g.input_shape.elements() != kBeatSamples) {
    throw ShapeError("model input " + g.input_shape.str() + " does not hold " +
                     std::to_string(kBeatSamples) + " samples");
  }
  const auto out = shapes.at(g.output).elements();
  if (out != kNumClasses) {
    throw ShapeError("model output has " + std::to_string(out) + " values, expected " +
                     std::to_string(kNumClasses));
  }
}

TensorF beat_tensor(const ModelGraph& g, const Eigen::VectorXd& beat) {
  if (beat.size() != g.input_shape.elements()) {
    throw ShapeError("beat has " + std::to_string(beat.size()) + " samples, model expects " +
                     std::to_string(g.input_shape.elements()));
  }
  return TensorF(g.input_shape, beat);
}

using Confusion = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

nlohmann::ordered_json metrics_to_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json conf = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row.push_back(m.confusion(r, c));
    conf.push_back(row);
  }
  j["confusion"] = conf;
  j["records"] = m.confusion.sum();
  j["accuracy"] = m.accuracy;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  return j;
}

}  // namespace

MetricsReport metrics_from_confusion(const Confusion& confusion) {
  if (confusion.rows() != confusion.cols() || confusion.rows() == 0) {
    throw ShapeError("confusion matrix must be square and non-empty");
  }
  MetricsReport m;
  m.confusion = confusion;
  const auto n = confusion.rows();
  const auto total = confusion.sum();
  m.accuracy = total == 0 ? 0.0
                          : static_cast<double>(confusion.trace()) / static_cast<double>(total);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto tp = static_cast<double>(confusion(c, c));
    const auto predicted = static_cast<double>(confusion.col(c).sum());
    const auto actual = static_cast<double>(confusion.row(c).sum());
    const double p = predicted == 0 ? 0.0 : tp / predicted;
    const double r = actual == 0 ? 0.0 : tp / actual;
    const double f = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
  }
  auto mean = [&](const std::vector<double>& v) {
    double s = 0;
    for (const double x : v) s += x;
    return s / static_cast<double>(n);
  };
  m.macro_precision = mean(m.precision);
  m.macro_recall = mean(m.recall);
  m.macro_f1 = mean(m.f1);
  return m;
}

const char* eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::Float: return "float";
    case EvalMode::Quant: return "quant";
    case EvalMode::Compiled: return "compiled";
  }
  return "?";
}

EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "float") return EvalMode::Float;
  if (s == "quant") return EvalMode::Quant;
  if (s == "compiled") return EvalMode::Compiled;
  throw Error("unknown evaluation mode '" + s + "' (float, quant, compiled)");
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  int best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  }
  return best;
}

Eigen::VectorXd infer(const ModelGraph& g, const Eigen::VectorXd& beat, EvalMode mode,
                      const ArchConfig& arch, const TcuProgram* compiled) {
  const TensorF x = beat_tensor(g, beat);
  switch (mode) {
    case EvalMode::Float:
      return execute_float(g, x).data;
    case EvalMode::Quant: {
      const auto fmt = FixedPointFormat::from_arch(arch);
      return dequantize(execute_quant(g, quantize(x, fmt))).data;
    }
    case EvalMode::Compiled: {
      TcuProgram local;
      if (compiled == nullptr) {
        local = lower(g, arch);
        compiled = &local;
      }
      return dequantize(run(*compiled, quantize(x, compiled->format())).output).data;
    }
  }
  return {};
}

MetricsReport evaluate(const ModelGraph& g, const Dataset& ds, const ArchConfig& arch,
                       EvalMode mode, int workers) {
  check_model(g);
  TcuProgram prog;
  if (mode == EvalMode::Compiled) prog = lower(g, arch);
  std::vector<int> predicted(static_cast<std::size_t>(ds.size()));
  parallel_for(ds.size(), workers, [&](std::int64_t i) {
    const Eigen::VectorXd logits = infer(g, ds.samples.row(i).transpose(), mode, arch, &prog);
    predicted[static_cast<std::size_t>(i)] = argmax(logits);
  });
  Confusion conf = Confusion::Zero(kNumClasses, kNumClasses);
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    ++conf(ds.labels[static_cast<std::size_t>(i)], predicted[static_cast<std::size_t>(i)]);
  }
  return metrics_from_confusion(conf);
}

FidelityReport float_quant_fidelity(const ModelGraph& g, const Dataset& ds,
                                    const ArchConfig& arch, int workers) {
  check_model(g);
  std::vector<double> err(static_cast<std::size_t>(ds.size()));
  std::vector<char> agree(static_cast<std::size_t>(ds.size()));
  parallel_for(ds.size(), workers, [&](std::int64_t i) {
    const Eigen::VectorXd beat = ds.samples.row(i).transpose();
    const Eigen::VectorXd f = infer(g, beat, EvalMode::Float, arch);
    const Eigen::VectorXd q = infer(g, beat, EvalMode::Quant, arch);
    err[static_cast<std::size_t>(i)] = (f - q).cwiseAbs().maxCoeff();
    agree[static_cast<std::size_t>(i)] = argmax(f) == argmax(q);
  });
  FidelityReport r;
  r.beats = ds.size();
  std::int64_t agreed = 0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    r.max_abs_error = std::max(r.max_abs_error, err[i]);
    agreed += agree[i];
  }
  r.argmax_agreement = r.beats == 0 ? 0.0 : static_cast<double>(agreed) / r.beats;
  return r;
}

BenchReport benchmark(const ModelGraph& g, const Dataset& ds, const ArchConfig& arch,
                      std::int64_t n_beats, int workers) {
  check_model(g);
  if (n_beats < 1 || n_beats > ds.size()) {
    throw Error("beat count " + std::to_string(n_beats) + " not in 1.." +
                std::to_string(ds.size()));
  }
  const TcuProgram prog = lower(g, arch);
  const FixedPointFormat fmt = prog.format();
  std::vector<SimReport> reports(static_cast<std::size_t>(n_beats));
  std::vector<int> predicted(static_cast<std::size_t>(n_beats));
  std::vector<double> host_ms(static_cast<std::size_t>(n_beats));
  parallel_for(n_beats, workers, [&](std::int64_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    const TensorF x = beat_tensor(g, ds.samples.row(i).transpose());
    SimResult res = run(prog, quantize(x, fmt));
    const auto t1 = std::chrono::steady_clock::now();
    host_ms[static_cast<std::size_t>(i)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    predicted[static_cast<std::size_t>(i)] = argmax(dequantize(res.output).data);
    reports[static_cast<std::size_t>(i)] = std::move(res.report);
  });

  BenchReport b;
  b.beats = n_beats;
  b.workers = workers;
  b.clock_mhz = arch.clock_mhz;
  b.macs_graph = prog.graph_macs;
  b.sim = reports.front();
  std::int64_t cycles = 0;
  double host = 0.0;
  Confusion conf = Confusion::Zero(kNumClasses, kNumClasses);
  for (std::int64_t i = 0; i < n_beats; ++i) {
    cycles += reports[static_cast<std::size_t>(i)].total_cycles;
    host += host_ms[static_cast<std::size_t>(i)];
    ++conf(ds.labels[static_cast<std::size_t>(i)], predicted[static_cast<std::size_t>(i)]);
  }
  b.mean_cycles = static_cast<double>(cycles) / static_cast<double>(n_beats);
  b.latency_ms = b.mean_cycles / (b.clock_mhz * 1000.0);
  b.throughput_gops = b.mean_cycles == 0.0 ? 0.0
                                           : 2.0 * static_cast<double>(b.macs_graph) /
                                                 (b.mean_cycles / (b.clock_mhz * 1e6)) / 1e9;
  b.host_ms_per_inference = host / static_cast<double>(n_beats);
  b.metrics = metrics_from_confusion(conf);
  return b;
}

std::string metrics_json(const MetricsReport& m, int indent) {
  return metrics_to_json(m).dump(indent);
}

std::string bench_json(const BenchReport& b, int indent) {
  nlohmann::ordered_json j;
  j["beats"] = b.beats;
  j["workers"] = b.workers;
  j["clock_mhz"] = b.clock_mhz;
  j["macs_graph"] = b.macs_graph;
  j["mean_cycles"] = b.mean_cycles;
  j["latency_ms"] = b.latency_ms;
  j["throughput_gops"] = b.throughput_gops;
  j["host_ms_per_inference"] = b.host_ms_per_inference;
  j["sim"] = nlohmann::ordered_json::parse(report_json(b.sim));
  j["metrics"] = metrics_to_json(b.metrics);
  return j.dump(indent);
}

}  // namespace tcu
