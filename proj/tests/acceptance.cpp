// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support/random_graph.hpp"
#include "tcu/cli.hpp"
#include "tcu/compiler.hpp"
#include "tcu/ecg.hpp"
#include "tcu/error.hpp"
#include "tcu/nnir.hpp"
#include "tcu/tcusim.hpp"

using namespace tcu;

namespace {

const std::string kSource = TCU_SOURCE_DIR;
constexpr int kGraphs = 100;

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Criterion 1: the default architecture against the default budget.
Outcome resource_table() {
  std::ostringstream out, err;
  const int code = run_cli({"arch"}, out, err);
  const std::map<std::string, std::pair<std::int64_t, double>> want{
      {"LUT", {17579, 23.75}}, {"FF", {20060, 18.85}}, {"BRAM", {1374, 41.64}},
      {"IO", {36, 24.00}},     {"DSP", {85, 53.13}}};
  Outcome o;
  o.ok = code == 0;
  std::istringstream lines(out.str());
  std::string line;
  int seen = 0;
  while (std::getline(lines, line)) {
    std::istringstream row(line);
    std::string name;
    std::int64_t used = 0, avail = 0;
    double pct = 0;
    if (!(row >> name >> used >> avail >> pct)) continue;
    const auto it = want.find(name);
    if (it == want.end()) continue;
    ++seen;
    const bool good = used == it->second.first && std::abs(pct - it->second.second) <= 0.01 + 1e-9;
    o.ok = o.ok && good;
    if (!o.detail.empty()) o.detail += ", ";
    o.detail += name + " " + std::to_string(used) + " " + std::to_string(pct).substr(0, 5) + "%";
  }
  o.ok = o.ok && seen == 5;
  return o;
}

// Criterion 2.
Outcome bit_exact() {
  const ArchConfig arch;
  const FixedPointFormat fmt = FixedPointFormat::from_arch(arch);
  int exact = 0;
  std::int64_t logits = 0;
  for (std::uint64_t seed = 0; seed < kGraphs; ++seed) {
    const ModelGraph g = testing::random_graph(seed);
    const QTensor x = quantize(testing::random_input(g.input_shape, seed + 1000), fmt);
    const QTensor want = execute_quant(g, x);
    const SimResult got = run(lower(g, arch), x);
    logits += want.size();
    if (got.output.shape() == want.shape() && got.output.values.data == want.values.data) ++exact;
  }
  return {exact == kGraphs, std::to_string(exact) + "/" + std::to_string(kGraphs) +
                                " graphs, " + std::to_string(logits) + " logits"};
}

// Criterion 3.
Outcome mac_accounting() {
  int equal = 0;
  std::int64_t total = 0;
  for (std::uint64_t seed = 0; seed < kGraphs; ++seed) {
    const ModelGraph g = testing::random_graph(seed);
    MulCounter c;
    execute_float(g, testing::random_input(g.input_shape, seed + 1000), &c);
    const std::int64_t macs = count_macs(g).total_macs;
    total += macs;
    if (macs == c.multiplies) ++equal;
  }
  return {equal == kGraphs,
          std::to_string(equal) + "/" + std::to_string(kGraphs) + " graphs, " +
              std::to_string(total) + " MACs"};
}

// Criterion 4.
Outcome fidelity() {
  const ModelGraph g = load_model(kSource + "/models/ecg_demo.nnmodel");
  const Dataset ds = load_csv(kSource + "/data/ecg_sample_500.csv");
  const FidelityReport f = float_quant_fidelity(g, ds, ArchConfig{}, 4);
  std::ostringstream d;
  d << "max error " << f.max_abs_error << ", agreement " << f.argmax_agreement << " over "
    << f.beats << " beats";
  return {f.beats == 500 && f.max_abs_error <= 0.05 && f.argmax_agreement >= 0.95, d.str()};
}

// Criterion 5.
Outcome formulas() {
  const ArchConfig arch;
  double worst = 0.0;
  auto recheck = [&](const SimReport& r) {
    const double seconds = static_cast<double>(r.total_cycles) / (r.clock_mhz * 1e6);
    const double lat = seconds * 1e3;
    const double gops = 2.0 * static_cast<double>(r.macs_graph) / seconds / 1e9;
    worst = std::max({worst, std::abs(lat - r.latency_ms), std::abs(gops - r.throughput_gops)});
  };
  recheck(make_report(lower(load_model(kSource + "/models/ecg_demo.nnmodel"), arch)));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    recheck(make_report(lower(testing::random_graph(seed), arch)));
  }
  TcuProgram idle;
  idle.arch = arch;
  idle.input = {TensorShape{1}, 0};
  idle.output = {TensorShape{1}, 0};
  idle.instructions.assign(100000, NoOp{});
  const SimResult r = run(idle, quantize(TensorF(TensorShape{1}), idle.format()));
  std::ostringstream d;
  d << "worst deviation " << worst << ", " << r.report.total_cycles << " cycles at "
    << arch.clock_mhz << " MHz = " << r.report.latency_ms << " ms";
  return {worst <= 1e-9 && r.report.total_cycles == 100000 && r.report.latency_ms == 1.0,
          d.str()};
}

// Criterion 6.
Outcome pipeline() {
  const Dataset ds = load_csv(kSource + "/data/ecg_sample_500.csv");
  auto once = [&] {
    const Dataset noisy = add_gaussian_noise(ds, {0.05, 17});
    auto [train, val] = stratified_split(noisy, 0.8, 17);
    const Dataset balanced = smote_resample(train, 5, 17);
    return std::make_pair(balanced, format_csv(balanced) + format_csv(val));
  };
  const auto [a, bytes_a] = once();
  const auto [b, bytes_b] = once();
  const auto counts = a.class_counts();
  bool equal = true;
  for (const auto c : counts) equal = equal && c == counts[0];

  std::vector<BeatRecord> recs(100);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].samples = Eigen::VectorXd::Constant(kBeatSamples, static_cast<double>(i) / 100.0);
  }
  const auto [tr, va] = stratified_split(Dataset::from_records(recs, "single"), 0.8, 1);
  std::ostringstream d;
  d << "smote counts " << counts[0] << " x" << counts.size() << ", split " << tr.size() << "/"
    << va.size() << ", reruns " << (bytes_a == bytes_b ? "identical" : "differ");
  return {equal && tr.size() == 80 && va.size() == 20 && bytes_a == bytes_b, d.str()};
}

// Criterion 7.
Outcome round_trip() {
  const ModelGraph g = load_model(kSource + "/models/ecg_demo.nnmodel");
  const TcuProgram prog = lower(g, ArchConfig{});
  const ArtifactBundle bundle = emit(prog, g);
  const TcuProgram back = load_bundle(bundle);
  const bool same = back.instructions == prog.instructions && back.constants == prog.constants;

  PipelineRng rng(7);
  const auto total = static_cast<std::int64_t>(bundle.program.size() + bundle.constants.size());
  int detected = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ArtifactBundle bad = bundle;
    const std::int64_t at = rng.below(total);
    const auto mask = static_cast<std::uint8_t>(1 + rng.below(255));
    if (at < static_cast<std::int64_t>(bad.program.size())) {
      bad.program[static_cast<std::size_t>(at)] ^= mask;
    } else {
      bad.constants[static_cast<std::size_t>(at) - bad.program.size()] ^= mask;
    }
    try {
      load_bundle(bad);
    } catch (const ChecksumError&) {
      ++detected;
    } catch (const Error&) {
    }
  }
  std::ostringstream d;
  d << prog.instructions.size() << " instructions " << (same ? "identical" : "differ") << ", "
    << detected << "/100 corruptions detected";
  return {same && detected == 100, d.str()};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
    double limit_s;
  };
  const std::vector<Criterion> criteria{
      {"resource table calibration", resource_table, 1.0},
      {"compiler/simulator bit-exact on random graphs", bit_exact, 300.0},
      {"MAC accounting equals multiply count", mac_accounting, 300.0},
      {"float vs quant fidelity on the demo model", fidelity, 300.0},
      {"latency and throughput formulas", formulas, 300.0},
      {"pipeline balance and determinism", pipeline, 300.0},
      {"artifact round trip and corruption detection", round_trip, 300.0},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s > criteria[i].limit_s) {
      o.ok = false;
      o.detail += " (over time limit)";
    }
    if (!o.ok) ++failures;
    std::printf("%s %zu %s: %s [%.3f s]\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].name,
                o.detail.c_str(), s);
  }
  return failures;
}
