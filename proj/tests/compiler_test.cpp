#include "doctest.h"

#include <algorithm>

#include "support/dataflow.hpp"
#include "support/random_graph.hpp"
#include "support/temp_dir.hpp"
#include "tcu/compiler.hpp"
#include "tcu/error.hpp"
#include "tcu/tcusim.hpp"

using namespace tcu;

namespace {

ModelGraph dense_chain(std::vector<std::int64_t> widths, std::uint64_t seed = 1) {
  PipelineRng rng(seed);
  ModelGraph g;
  g.name = "chain";
  g.input_shape = TensorShape{widths.front()};
  std::string prev = kGraphInput;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const std::string name = "d" + std::to_string(i);
    g.layers.push_back(LayerSpec::dense(name, prev, widths[i]));
    LayerWeights w;
    w.kernel.resize(widths[i - 1], widths[i]);
    w.bias.resize(widths[i]);
    for (Eigen::Index j = 0; j < w.kernel.size(); ++j) w.kernel.data()[j] = rng.uniform() - 0.5;
    for (Eigen::Index j = 0; j < w.bias.size(); ++j) w.bias[j] = rng.uniform() - 0.5;
    g.weights[name] = std::move(w);
    prev = name;
  }
  g.output = prev;
  return g;
}

ModelGraph demo_model() {
  return load_model(std::string(TCU_SOURCE_DIR) + "/models/ecg_demo.nnmodel");
}

// Independent tiler: walks the weight matrix in array-sized steps.
std::vector<TileCoord> brute_force_tiles(std::int64_t K, std::int64_t N, std::int64_t A) {
  std::vector<TileCoord> tiles;
  std::int64_t j = 0;
  for (std::int64_t n0 = 0; n0 < N; n0 += A, ++j) {
    std::int64_t r = 0;
    for (std::int64_t k0 = 0; k0 < K; k0 += A, ++r) tiles.push_back({j, r});
  }
  return tiles;
}

void check_bit_exact(const ModelGraph& g, const ArchConfig& arch, std::uint64_t seed) {
  const auto fmt = FixedPointFormat::from_arch(arch);
  const QTensor x = quantize(testing::random_input(g.input_shape, seed), fmt);
  const QTensor want = execute_quant(g, x);
  const SimResult got = run(lower(g, arch), x);
  REQUIRE(got.output.shape() == want.shape());
  CHECK(got.output.values.data == want.values.data);
}

}  // namespace

TEST_CASE("random graphs compile to bit-exact programs") {
  const ArchConfig arch;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    check_bit_exact(testing::random_graph(seed), arch, seed + 1000);
  }
}

TEST_CASE("bit-exact on other architectures") {
  ArchConfig small;
  small.array_size = small.simd_lanes = 4;
  ArchConfig odd;
  odd.array_size = odd.simd_lanes = 3;
  odd.data_width_bits = 12;
  odd.frac_bits = 5;
  odd.local_depth = 64;
  odd.acc_depth = 32;
  ArchConfig wide;
  wide.array_size = wide.simd_lanes = 16;
  wide.data_width_bits = 24;
  wide.frac_bits = 12;
  for (const auto& arch : {small, odd, wide}) {
    CAPTURE(arch.array_size);
    for (std::uint64_t seed = 200; seed < 240; ++seed) {
      CAPTURE(seed);
      check_bit_exact(testing::random_graph(seed), arch, seed);
    }
  }
}

TEST_CASE("tiling examples") {
  const ArchConfig arch;
  const auto t88 = plan_tiling(dense_chain({8, 8}), arch);
  REQUIRE(t88.layers.size() == 1);
  CHECK(t88.layers[0].reduction_tiles == 1);
  CHECK(t88.layers[0].output_tiles == 1);

  const auto t187 = plan_tiling(dense_chain({187, 5}), arch);
  CHECK(t187.layers[0].reduction_tiles == 24);
  CHECK(t187.layers[0].output_tiles == 1);
  CHECK(t187.layers[0].rows == 1);

  ModelGraph conv;
  conv.input_shape = TensorShape{10, 10, 1};
  conv.layers = {LayerSpec::conv2d("c", kGraphInput, 3, 3, 8)};
  conv.output = "c";
  conv.weights["c"] = {Eigen::MatrixXd::Ones(9, 8), Eigen::VectorXd::Zero(8)};
  const auto tc = plan_tiling(conv, arch);
  const LayerTiling* t = tc.find("c");
  REQUIRE(t != nullptr);
  CHECK(t->im2col);
  CHECK(t->reduction == 9);
  CHECK(t->rows == 64);
  CHECK(t->reduction_tiles == 2);
  CHECK(t->output_tiles == 1);
  CHECK(t->order == brute_force_tiles(9, 8, 8));
}

TEST_CASE("tiling agrees with the brute-force tiler") {
  for (const std::int64_t A : {3, 4, 8}) {
    ArchConfig arch;
    arch.array_size = arch.simd_lanes = A;
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const ModelGraph g = testing::random_graph(seed);
      const ShapeMap shapes = infer_shapes(g);
      const TilingPlan plan = plan_tiling(g, arch);
      for (const auto& l : g.layers) {
        if (!is_parameterized(l.kind)) continue;
        const LayerTiling* t = plan.find(l.name);
        REQUIRE(t != nullptr);
        const auto [K, N] = kernel_matrix_shape(l, shapes.at(l.inputs.front()));
        CHECK(t->reduction == K);
        CHECK(t->outputs == N);
        CHECK(t->rows == shapes.at(l.name).positions());
        CHECK(t->order == brute_force_tiles(K, N, A));
        CHECK(static_cast<std::int64_t>(t->order.size()) == t->reduction_tiles * t->output_tiles);
      }
    }
  }
}

TEST_CASE("dense 8 to 8 keeps at most three local vectors live") {
  const ModelGraph g = dense_chain({8, 8});
  const Compilation c = compile(g, ArchConfig{});
  const auto rep = testing::replay_dataflow(c.program);
  CHECK(rep.read_before_write.empty());
  CHECK(rep.peak_of(Region::Local) <= 3);
  CHECK(c.memory.peak_of(Region::Local) <= 3);
}

TEST_CASE("liveness reuse lowers the dram1 peak") {
  const ModelGraph g = dense_chain({32, 32, 32, 32});
  const ArchConfig arch;
  const TilingPlan t = plan_tiling(g, arch);
  const MemoryPlan reuse = allocate(g, arch, t, ReusePolicy::Liveness);
  const MemoryPlan none = allocate(g, arch, t, ReusePolicy::None);
  std::int64_t sum = 0;
  for (const auto& a : none.allocations) {
    if (a.region == Region::Dram1) sum += a.extent;
  }
  CHECK(none.peak_of(Region::Dram1) == sum);
  CHECK(reuse.peak_of(Region::Dram1) < sum);
  CHECK(testing::overlapping_allocations(reuse).empty());
  // Both plans compute the same thing.
  check_bit_exact(g, arch, 5);
  const auto fmt = FixedPointFormat::from_arch(arch);
  const QTensor x = quantize(testing::random_input(g.input_shape, 6), fmt);
  CHECK(run(compile(g, arch, ReusePolicy::None).program, x).output.values.data ==
        run(compile(g, arch, ReusePolicy::Liveness).program, x).output.values.data);
}

TEST_CASE("tiny accumulator is a capacity error naming acc") {
  ArchConfig arch;
  arch.acc_depth = 1;
  try {
    compile(dense_chain({8, 8}), arch);
    FAIL("expected a capacity error");
  } catch (const CapacityError& e) {
    CHECK(e.region() == "acc");
    CHECK(e.layer() == "d1");
    CHECK(e.shortfall() > 0);
    CHECK(std::string(e.what()).find("acc") != std::string::npos);
  }
}

TEST_CASE("tiny dram1 is a capacity error") {
  ArchConfig arch;
  arch.dram1_depth = 3;
  CHECK_THROWS_AS(compile(dense_chain({64, 64}), arch), CapacityError);
}

TEST_CASE("identity dense passes the input through") {
  ModelGraph g = dense_chain({12, 12});
  g.weights["d1"].kernel = Eigen::MatrixXd::Identity(12, 12);
  g.weights["d1"].bias.setZero();
  const auto fmt = FixedPointFormat{};
  const QTensor x = quantize(testing::random_input(g.input_shape, 1), fmt);
  CHECK(run(lower(g, ArchConfig{}), x).output.values.data == x.values.data);
}

TEST_CASE("demo model is bit-exact") {
  const ModelGraph g = demo_model();
  const ArchConfig arch;
  const TcuProgram prog = lower(g, arch);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TensorF x(g.input_shape);
    PipelineRng rng(seed);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    const QTensor q = quantize(x, prog.format());
    CHECK(run(prog, q).output.values.data == execute_quant(g, q).values.data);
  }
}

TEST_CASE("Add with unequal shapes is a shape error") {
  ModelGraph g = dense_chain({6, 4});
  g.layers.push_back(LayerSpec::add("bad", kGraphInput, "d1"));
  g.output = "bad";
  CHECK_THROWS_AS(lower(g, ArchConfig{}), ShapeError);
}

TEST_CASE("compiled programs read only what they wrote") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    const Compilation c = compile(testing::random_graph(seed), ArchConfig{});
    const auto rep = testing::replay_dataflow(c.program);
    CHECK(rep.read_before_write.empty());
    if (!rep.read_before_write.empty()) MESSAGE(rep.read_before_write.front());
    const auto overlaps = testing::overlapping_allocations(c.memory);
    CHECK(overlaps.empty());
    if (!overlaps.empty()) MESSAGE(overlaps.front());
    for (const Region r : {Region::Dram0, Region::Dram1, Region::Local, Region::Acc}) {
      const std::string region = region_name(r);
      CAPTURE(region);
      CHECK(rep.peak_of(r) <= c.memory.peak_of(r));
    }
    CHECK(c.memory.peak_of(Region::Local) <= c.program.arch.local_depth);
    CHECK(c.memory.peak_of(Region::Acc) <= c.program.arch.acc_depth);
  }
}

TEST_CASE("program structure") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    const ModelGraph g = testing::random_graph(seed);
    const TcuProgram p = lower(g, ArchConfig{});
    CHECK(compiled_macs(p) >= count_macs(g).total_macs);
    CHECK(p.graph_macs == count_macs(g).total_macs);
    bool loaded = false;
    for (const auto& i : p.instructions) {
      if (std::holds_alternative<LoadWeights>(i)) loaded = true;
      if (const auto* m = std::get_if<MatMul>(&i)) CHECK((loaded || m->zero_weights));
    }
    CHECK(p.input.shape == g.input_shape);
    CHECK(p.output.shape == infer_shapes(g).at(g.output));
  }
}

TEST_CASE("lowering is deterministic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ModelGraph g = testing::random_graph(seed);
    const TcuProgram a = lower(g, ArchConfig{});
    const TcuProgram b = lower(g, ArchConfig{});
    CHECK(a.instructions == b.instructions);
    CHECK(a.constants == b.constants);
    CHECK(emit(a, g).manifest == emit(b, g).manifest);
  }
}

TEST_CASE("constants hold the quantized weights in allocation order") {
  const ModelGraph g = dense_chain({19, 11, 5});
  const ArchConfig arch;
  const Compilation c = compile(g, arch);
  const auto qw = quantize_weights(g, c.program.format());
  const std::int64_t A = arch.array_size;
  std::int64_t prev_base = -1;
  for (const auto& l : g.layers) {
    const Allocation* w = c.memory.find(l.name, "weights");
    const Allocation* b = c.memory.find(l.name, "bias");
    REQUIRE(w != nullptr);
    REQUIRE(b != nullptr);
    CHECK(w->base > prev_base);
    prev_base = w->base;
    const auto& q = qw.at(l.name);
    const std::int64_t K = q.kernel.rows(), N = q.kernel.cols();
    const std::int64_t Tk = (K + A - 1) / A;
    for (std::int64_t k = 0; k < K; ++k) {
      for (std::int64_t n = 0; n < N; ++n) {
        const std::int64_t vec = w->base + ((n / A) * Tk + k / A) * A + k % A;
        CHECK(c.program.constants[static_cast<std::size_t>(vec * A + n % A)] == q.kernel(k, n));
      }
    }
    for (std::int64_t n = 0; n < N; ++n) {
      CHECK(c.program.constants[static_cast<std::size_t>((b->base + n / A) * A + n % A)] ==
            q.bias(n));
    }
  }
}

TEST_CASE("instruction encoding round-trips") {
  std::vector<Instruction> prog = {
      NoOp{},
      LoadWeights{7, 3},
      MatMul{1, 2, 3, true, false},
      MatMul{4, 5, 6, false, true},
      DataMove{MoveDir::Dram1ToDram1, true, 123456, 654321, 99},
      DataMove{MoveDir::AccToLocal, false, 0, 4294967295u, 1},
      Simd{SimdOp::ReluMax0, 3, std::nullopt, false, 4, 65535},
      Simd{SimdOp::Add, 3, 9u, true, 4, 2},
      Simd{SimdOp::Max, 1, 2u, false, 3, 4},
  };
  const auto bytes = encode_program(prog);
  CHECK(bytes.size() == prog.size() * kInstructionBytes);
  CHECK(decode_program(bytes) == prog);
  std::vector<std::uint8_t> bad(kInstructionBytes, 0);
  bad[0] = 9;
  CHECK_THROWS(decode_program(bad));
}

TEST_CASE("bundle round-trip") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const ModelGraph g = testing::random_graph(seed);
    const TcuProgram p = lower(g, ArchConfig{});
    const ArtifactBundle b = emit(p, g);
    const TcuProgram q = load_bundle(b);
    CHECK(q.instructions == p.instructions);
    CHECK(q.constants == p.constants);
    CHECK(q.input == p.input);
    CHECK(q.output == p.output);
    CHECK(q.arch == p.arch);
    CHECK(q.graph_macs == p.graph_macs);
    CHECK(decode_constants(b.constants, p.format()) == p.constants);
  }
}

TEST_CASE("bundle files on disk") {
  testing::TempDir dir;
  const ModelGraph g = demo_model();
  const TcuProgram p = lower(g, ArchConfig{});
  const auto manifest = write_bundle(emit(p, g), dir.path(), "demo");
  CHECK(std::filesystem::exists(dir.path() / "demo.tmodel"));
  CHECK(std::filesystem::exists(dir.path() / "demo.tprog"));
  CHECK(std::filesystem::exists(dir.path() / "demo.tdata"));
  CHECK(load_bundle(read_bundle(manifest)).instructions == p.instructions);
}

TEST_CASE("single byte corruption is detected") {
  const ModelGraph g = testing::random_graph(3);
  const ArtifactBundle b = emit(lower(g, ArchConfig{}), g);
  PipelineRng rng(99);
  const auto total = static_cast<std::int64_t>(b.program.size() + b.constants.size());
  for (int trial = 0; trial < 100; ++trial) {
    ArtifactBundle c = b;
    const std::int64_t at = rng.below(total);
    const auto flip = static_cast<std::uint8_t>(1 + rng.below(255));
    if (at < static_cast<std::int64_t>(c.program.size())) {
      c.program[static_cast<std::size_t>(at)] ^= flip;
    } else {
      c.constants[static_cast<std::size_t>(at) - c.program.size()] ^= flip;
    }
    CHECK_THROWS_AS(load_bundle(c), ChecksumError);
  }
  ArtifactBundle shorter = b;
  shorter.constants.pop_back();
  CHECK_THROWS_AS(load_bundle(shorter), ChecksumError);
}

TEST_CASE("bundle compiled for another array size is refused") {
  const ModelGraph g = dense_chain({8, 8});
  const ArtifactBundle b = emit(lower(g, ArchConfig{}), g);
  ArchConfig runtime;
  runtime.array_size = runtime.simd_lanes = 16;
  CHECK_THROWS_AS(load_bundle(b, runtime), IncompatibleBundleError);
  ArchConfig narrow;
  narrow.frac_bits = 6;
  CHECK_THROWS_AS(load_bundle(b, narrow), IncompatibleBundleError);
  CHECK_NOTHROW(load_bundle(b, ArchConfig{}));
}

TEST_CASE("manifest errors") {
  const ModelGraph g = dense_chain({8, 8});
  ArtifactBundle b = emit(lower(g, ArchConfig{}), g);
  CHECK(b.manifest.find("format = tcu-bundle-1") != std::string::npos);
  ArtifactBundle extra = b;
  extra.manifest += "surprise = 1\n";
  CHECK_THROWS_AS(load_bundle(extra), FormatError);
  ArtifactBundle cut = b;
  cut.manifest = "format = tcu-bundle-1\n";
  CHECK_THROWS_AS(load_bundle(cut), FormatError);
}

TEST_CASE("constant encoding") {
  const FixedPointFormat f16;
  const std::vector<std::int32_t> raw = {0, 1, -1, 32767, -32768, 256};
  const auto bytes = encode_constants(raw, f16);
  CHECK(bytes.size() == raw.size() * 2);
  CHECK(bytes[2] == 0x01);
  CHECK(bytes[4] == 0xff);
  CHECK(bytes[5] == 0xff);
  CHECK(decode_constants(bytes, f16) == raw);
  const FixedPointFormat f12{12, 5, 24};
  const std::vector<std::int32_t> r12 = {2047, -2048, 5};
  CHECK(decode_constants(encode_constants(r12, f12), f12) == r12);
  CHECK_THROWS(encode_constants({4096}, f12));
}
