#include "doctest.h"

#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "support/temp_dir.hpp"
#include "tcu/cli.hpp"
#include "tcu/compiler.hpp"
#include "tcu/ecg.hpp"
#include "tcu/kv.hpp"
#include "tcu/nnir.hpp"

using namespace tcu;

namespace {

const std::string kSource = TCU_SOURCE_DIR;
const std::string kDemo = kSource + "/models/ecg_demo.nnmodel";
const std::string kSample = kSource + "/data/ecg_sample_500.csv";

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool contains(const std::string& s, const std::string& needle) {
  return s.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("arch with defaults prints the utilization table") {
  const CliResult r = cli({"arch"});
  CHECK(r.code == 0);
  for (const char* cell : {"LUT", "FF", "BRAM", "DSP", "IO", "18.85", "41.64", "24.00", "53.13"}) {
    CAPTURE(cell);
    CHECK(contains(r.out, cell));
  }
  CHECK(contains(r.out, "fits"));
}

TEST_CASE("arch json") {
  const CliResult r = cli({"arch", "--json"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["fits"] == true);
  CHECK(j["resources"]["DSP"]["used"] == 85);
  CHECK(j["resources"]["DSP"]["available"] == 160);
}

TEST_CASE("arch exit codes") {
  testing::TempDir dir;
  const auto big = dir.path() / "big.arch";
  std::string text = slurp(kSource + "/configs/pynq_z1.arch");
  text.replace(text.find("array_size = 8"), 14, "array_size = 64");
  text.replace(text.find("simd_lanes = 8"), 14, "simd_lanes = 64");
  write_text_file(big, text);
  const CliResult over = cli({"arch", "--config", big.string()});
  CHECK(over.code == 1);
  CHECK(contains(over.out, "overflow: LUT FF DSP"));

  CHECK(cli({"arch", "--config", (dir.path() / "missing.arch").string()}).code == 2);
  CHECK(cli({"arch", "--bogus"}).code == 2);
  CHECK(cli({}).code == 2);

  const auto bad = dir.path() / "bad.arch";
  text.replace(text.find("array_size = 64"), 15, "array_size = 0");
  write_text_file(bad, text);
  const CliResult invalid = cli({"arch", "--config", bad.string()});
  CHECK(invalid.code == 1);
  CHECK(contains(invalid.out, "array_size"));
}

TEST_CASE("compile the demo model") {
  testing::TempDir dir;
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  const CliResult r = cli({"compile", "--model", kDemo, "--out", a.string()});
  REQUIRE(r.code == 0);
  for (const char* ext : {".tmodel", ".tprog", ".tdata"}) {
    CHECK(std::filesystem::exists(a / (std::string("ecg_demo") + ext)));
  }
  const ArtifactBundle bundle = read_bundle(a / "ecg_demo.tmodel");
  const TcuProgram prog = load_bundle(bundle);  // verifies the checksum
  CHECK(prog.graph_macs == 63864);

  REQUIRE(cli({"compile", "--model", kDemo, "--out", b.string()}).code == 0);
  for (const char* ext : {".tmodel", ".tprog", ".tdata"}) {
    const std::string f = std::string("ecg_demo") + ext;
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

TEST_CASE("compile rejects unsupported layers") {
  testing::TempDir dir;
  const auto model = dir.path() / "rnn.nnmodel";
  write_text_file(model,
                  "tcu-model 1\n"
                  "name rnn\n"
                  "input 187\n"
                  "layer l1 LSTM in=input units=4\n"
                  "output l1\n");
  const CliResult r = cli({"compile", "--model", model.string(), "--out", dir.path().string()});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "LSTM"));
  CHECK(contains(r.err, "l1"));
}

TEST_CASE("sim on an identity dense layer returns its input") {
  testing::TempDir dir;
  ModelGraph g;
  g.name = "ident";
  g.input_shape = TensorShape{6};
  g.layers = {LayerSpec::dense("fc", kGraphInput, 6)};
  g.output = "fc";
  g.weights["fc"] = {Eigen::MatrixXd::Identity(6, 6), Eigen::VectorXd::Zero(6)};
  save_model(g, dir.path() / "ident.nnmodel");
  REQUIRE(cli({"compile", "--model", (dir.path() / "ident.nnmodel").string(), "--out",
               dir.path().string()})
              .code == 0);
  write_text_file(dir.path() / "x.txt", "0.5, -1.25 2 0 3.75,-0.125\n");
  const CliResult r = cli({"sim", "--bundle", (dir.path() / "ident.tmodel").string(), "--input",
                           (dir.path() / "x.txt").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["output"]["values"] == std::vector<double>{0.5, -1.25, 2, 0, 3.75, -0.125});
  CHECK(j["output"]["raw"][0] == 128);
  CHECK(j["output"]["shape"] == std::vector<int>{6});
  CHECK(j["total_cycles"].get<std::int64_t>() > 0);

  write_text_file(dir.path() / "short.txt", "1 2 3\n");
  const CliResult bad = cli({"sim", "--bundle", (dir.path() / "ident.tmodel").string(),
                             "--input", (dir.path() / "short.txt").string()});
  CHECK(bad.code == 1);
  CHECK(contains(bad.err, "3 values"));
}

TEST_CASE("sim detects a corrupted bundle") {
  testing::TempDir dir;
  REQUIRE(cli({"compile", "--model", kDemo, "--out", dir.path().string()}).code == 0);
  std::string prog = slurp(dir.path() / "ecg_demo.tprog");
  prog[prog.size() / 2] = static_cast<char>(prog[prog.size() / 2] ^ 0x10);
  {
    std::ofstream f(dir.path() / "ecg_demo.tprog", std::ios::binary);
    f << prog;
  }
  const CliResult r = cli({"sim", "--bundle", (dir.path() / "ecg_demo.tmodel").string(), "--csv",
                           kSample, "--row", "0"});
  CHECK(r.code == 1);
  CHECK(contains(r.err, "checksum"));
}

TEST_CASE("sim on a csv row") {
  testing::TempDir dir;
  REQUIRE(cli({"compile", "--model", kDemo, "--out", dir.path().string()}).code == 0);
  const auto out = dir.path() / "sim.json";
  const CliResult r = cli({"sim", "--bundle", (dir.path() / "ecg_demo.tmodel").string(), "--csv",
                           kSample, "--row", "3", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j["output"]["values"].size() == 5);
  CHECK(cli({"sim", "--bundle", (dir.path() / "ecg_demo.tmodel").string(), "--csv", kSample,
             "--row", "500"})
            .code == 1);
}

TEST_CASE("data round trips without noise") {
  testing::TempDir dir;
  const auto out = dir.path() / "copy.csv";
  const CliResult r =
      cli({"data", "--in", kSample, "--out", out.string(), "--noise-sigma", "0"});
  REQUIRE(r.code == 0);
  const Dataset a = load_csv(kSample);
  const Dataset b = load_csv(out);
  CHECK(a.samples == b.samples);
  CHECK(a.labels == b.labels);
  CHECK(cli({"data", "--in", kSample, "--out", out.string(), "--noise-sigma", "-1"}).code == 2);
}

TEST_CASE("data split and smote") {
  testing::TempDir dir;
  const auto train = dir.path() / "train.csv";
  const auto val = dir.path() / "val.csv";
  const std::vector<std::string> args{"data", "--in", kSample, "--out", train.string(),
                                      "--val-out", val.string(), "--smote", "--seed", "4"};
  const CliResult r = cli(args);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  const auto counts = j["train"]["class_counts"].get<std::vector<std::int64_t>>();
  for (const auto c : counts) CHECK(c == counts[0]);
  CHECK(j["val"]["records"].get<std::int64_t>() + j["train"]["records"].get<std::int64_t>() >=
        500);
  const std::string first = slurp(train);
  REQUIRE(cli(args).code == 0);
  CHECK(slurp(train) == first);
}

TEST_CASE("bench json fields") {
  const CliResult r = cli({"bench", "--model", kDemo, "--data", kSample, "--beats", "5"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  for (const char* key : {"beats", "mean_cycles", "latency_ms", "throughput_gops",
                          "macs_graph", "clock_mhz", "metrics", "sim"}) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(j["beats"] == 5);
  CHECK(cli({"bench", "--model", kDemo, "--data", kSample, "--beats", "0"}).code == 2);
}
