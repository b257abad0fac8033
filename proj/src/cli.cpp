#include "tcu/cli.hpp"

#include <chrono>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcu/arch.hpp"
#include "tcu/compiler.hpp"
#include "tcu/ecg.hpp"
#include "tcu/error.hpp"
#include "tcu/kv.hpp"
#include "tcu/nnir.hpp"
#include "tcu/tcusim.hpp"

namespace tcu {

namespace {

struct Options {
  std::string arch_path;
  std::string budget_path;
  bool json = false;

  std::string model_path;
  std::string out_dir;
  std::string stem;

  std::string bundle_path;
  std::string input_path;
  std::string csv_path;
  std::int64_t row = 0;
  std::string out_path;

  std::int64_t beats = 10;
  int workers = 1;

  std::string data_in;
  std::string val_out;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  bool smote = false;
  int smote_k = 5;
  double train_frac = 0.8;
};

ArchConfig arch_or_default(const std::string& path) {
  return path.empty() ? ArchConfig::pynq_z1() : load_arch(path);
}

void emit_text(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text << "\n";
  } else {
    write_text_file(out_path, text + "\n");
  }
}

int cmd_arch(const Options& o, std::ostream& out) {
  const ArchConfig cfg = arch_or_default(o.arch_path);
  const ResourceBudget budget =
      o.budget_path.empty() ? ResourceBudget::zynq7000() : load_budget(o.budget_path);
  const auto violations = validate_arch(cfg);
  if (!violations.empty()) {
    for (const auto& v : violations) out << "invalid " << v.field << ": " << v.message << "\n";
    return 1;
  }
  const ResourceEstimate est = estimate_resources(cfg, budget);
  const FitVerdict fit = check_fit(est, budget);
  if (o.json) {
    nlohmann::ordered_json j;
    for (const auto r : kAllResources) {
      j["resources"][resource_name(r)] = {{"used", est.used(r)},
                                          {"available", available(budget, r)},
                                          {"pct", est.pct(r)}};
    }
    j["fits"] = fit.fits();
    std::vector<std::string> over;
    for (const auto r : fit.overflowing) over.emplace_back(resource_name(r));
    j["overflowing"] = over;
    out << j.dump(2) << "\n";
  } else {
    out << format_estimate(est, budget);
    if (fit.fits()) {
      out << "fits\n";
    } else {
      out << "overflow:";
      for (const auto r : fit.overflowing) out << " " << resource_name(r);
      out << "\n";
    }
  }
  return fit.fits() ? 0 : 1;
}

int cmd_compile(const Options& o, std::ostream& out) {
  const ModelGraph g = load_model(o.model_path);
  const ArchConfig arch = arch_or_default(o.arch_path);
  const Compilation c = compile(g, arch);
  const ArtifactBundle b = emit(c.program, g);
  const std::string stem = o.stem.empty() ? g.name : o.stem;
  const auto manifest = write_bundle(b, o.out_dir, stem);
  const SimReport rep = make_report(c.program);
  out << "wrote " << manifest.string() << "\n";
  out << "instructions " << c.program.instructions.size() << ", constants "
      << c.program.constants.size() / static_cast<std::size_t>(arch.array_size)
      << " vectors, graph MACs " << c.program.graph_macs << ", cycles " << rep.total_cycles
      << "\n";
  for (const Region r : {Region::Dram0, Region::Dram1, Region::Local, Region::Acc}) {
    out << "peak " << region_name(r) << " " << c.memory.peak_of(r) << " vectors\n";
  }
  return 0;
}

std::vector<double> read_tensor_file(const std::string& path) {
  std::string text = read_text_file(path);
  for (char& ch : text) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream is(text);
  std::vector<double> v;
  std::string tok;
  while (is >> tok) v.push_back(parse_real(tok, path));
  return v;
}

int cmd_sim(const Options& o, std::ostream& out) {
  const ArtifactBundle b = read_bundle(o.bundle_path);
  const TcuProgram prog =
      o.arch_path.empty() ? load_bundle(b) : load_bundle(b, load_arch(o.arch_path));
  std::vector<double> values;
  if (!o.input_path.empty()) {
    values = read_tensor_file(o.input_path);
  } else {
    const Dataset ds = load_csv(o.csv_path);
    if (o.row < 0 || o.row >= ds.size()) {
      throw Error("row " + std::to_string(o.row) + " not in 0.." + std::to_string(ds.size() - 1));
    }
    const Eigen::VectorXd beat = ds.samples.row(o.row).transpose();
    values.assign(beat.data(), beat.data() + beat.size());
  }
  if (static_cast<std::int64_t>(values.size()) != prog.input.shape.elements()) {
    throw ShapeError("input has " + std::to_string(values.size()) + " values, program expects " +
                     prog.input.shape.str());
  }
  TensorF x(prog.input.shape);
  for (std::size_t i = 0; i < values.size(); ++i) x[static_cast<std::int64_t>(i)] = values[i];
  const SimResult res = run(prog, quantize(x, prog.format()));

  auto j = nlohmann::ordered_json::parse(report_json(res.report));
  const TensorF y = dequantize(res.output);
  j["output"]["shape"] = res.output.shape().dims();
  j["output"]["values"] = std::vector<double>(y.data.data(), y.data.data() + y.size());
  j["output"]["raw"] = std::vector<std::int32_t>(res.output.values.data.data(),
                                                 res.output.values.data.data() + y.size());
  emit_text(j.dump(2), o.out_path, out);
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const ModelGraph g = load_model(o.model_path);
  const ArchConfig arch = arch_or_default(o.arch_path);
  const Dataset ds = load_csv(o.csv_path);
  const BenchReport rep = benchmark(g, ds, arch, o.beats, o.workers);
  emit_text(bench_json(rep), o.out_path, out);
  return 0;
}

nlohmann::ordered_json counts_json(const Dataset& ds) {
  return {{"records", ds.size()}, {"class_counts", ds.class_counts()}};
}

int cmd_data(const Options& o, std::ostream& out) {
  Dataset ds = load_csv(o.data_in);
  nlohmann::ordered_json j;
  j["input"] = counts_json(ds);
  ds = add_gaussian_noise(ds, {o.noise_sigma, o.seed});
  Dataset train = ds;
  if (!o.val_out.empty()) {
    auto [tr, val] = stratified_split(ds, o.train_frac, o.seed);
    train = std::move(tr);
    write_csv(val, o.val_out);
    j["val"] = counts_json(val);
  }
  if (o.smote) train = smote_resample(train, o.smote_k, o.seed);
  write_csv(train, o.out_path);
  j["train"] = counts_json(train);
  j["provenance"] = train.provenance;
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TCU toolchain: architecture costing, compilation, simulation, ECG data"};
  app.name("tcu");
  app.require_subcommand(1);
  Options o;

  auto* arch = app.add_subcommand("arch", "Estimate FPGA resources for an architecture");
  arch->add_option("--config", o.arch_path, "Architecture file (default: built-in PYNQ-Z1)")
      ->check(CLI::ExistingFile);
  arch->add_option("--budget", o.budget_path, "Device budget file (default: Zynq-7000)")
      ->check(CLI::ExistingFile);
  arch->add_flag("--json", o.json, "Print JSON instead of a table");

  auto* comp = app.add_subcommand("compile", "Compile a model into .tmodel/.tprog/.tdata");
  comp->add_option("--model", o.model_path, "Model manifest")->required()->check(CLI::ExistingFile);
  comp->add_option("--arch", o.arch_path, "Architecture file")->check(CLI::ExistingFile);
  comp->add_option("--out", o.out_dir, "Output directory")->required();
  comp->add_option("--name", o.stem, "File stem (default: model name)");

  auto* sim = app.add_subcommand("sim", "Run a compiled bundle on one input");
  sim->add_option("--bundle", o.bundle_path, ".tmodel manifest")->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--arch", o.arch_path, "Runtime architecture to check the bundle against")
      ->check(CLI::ExistingFile);
  auto* in_opt = sim->add_option("--input", o.input_path, "Whitespace or comma separated reals")
                     ->check(CLI::ExistingFile);
  auto* csv_opt = sim->add_option("--csv", o.csv_path, "Beat CSV to take the input from")
                      ->check(CLI::ExistingFile);
  sim->add_option("--row", o.row, "Row of --csv (0-based)")->needs(csv_opt);
  in_opt->excludes(csv_opt);
  sim->add_option("--out", o.out_path, "Write JSON here instead of stdout");

  auto* bench = app.add_subcommand("bench", "Benchmark compiled inference on ECG beats");
  bench->add_option("--model", o.model_path, "Model manifest")->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--data", o.csv_path, "Beat CSV")->required()->check(CLI::ExistingFile);
  bench->add_option("--arch", o.arch_path, "Architecture file")->check(CLI::ExistingFile);
  bench->add_option("--beats", o.beats, "Beats to run")->check(CLI::PositiveNumber);
  bench->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  bench->add_option("--out", o.out_path, "Write JSON here instead of stdout");

  auto* data = app.add_subcommand("data", "Noise, split and SMOTE an ECG beat CSV");
  data->add_option("--in", o.data_in, "Input CSV")->required()->check(CLI::ExistingFile);
  data->add_option("--out", o.out_path, "Output CSV (train part when splitting)")->required();
  data->add_option("--val-out", o.val_out, "Validation CSV; enables the stratified split");
  data->add_option("--train-frac", o.train_frac, "Training fraction")->check(CLI::Range(0.0, 1.0));
  data->add_option("--noise-sigma", o.noise_sigma, "Gaussian noise sigma")
      ->check(CLI::NonNegativeNumber);
  data->add_option("--seed", o.seed, "Seed for noise, split and SMOTE");
  data->add_flag("--smote", o.smote, "Oversample minority classes of the output");
  data->add_option("--smote-k", o.smote_k, "SMOTE neighbours")->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"tcu"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help
    err << "tcu: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*arch) return cmd_arch(o, out);
    if (*comp) return cmd_compile(o, out);
    if (*sim) return cmd_sim(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*data) return cmd_data(o, out);
  } catch (const IoError& e) {
    err << "tcu: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "tcu: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace tcu
