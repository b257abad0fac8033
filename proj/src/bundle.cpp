#include <zlib.h>

#include <cstdio>
#include <sstream>

#include "tcu/compiler.hpp"
#include "tcu/error.hpp"
#include "tcu/kv.hpp"

namespace tcu {

namespace {

constexpr const char* kBundleFormat = "tcu-bundle-1";

std::string shape_text(const TensorShape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.dims().size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s.dims()[i]);
  }
  return out;
}

TensorShape parse_shape(const std::string& text, const std::string& ctx) {
  std::vector<std::int64_t> dims;
  for (const auto& part : split(text, ',')) dims.push_back(parse_int(trim(part), ctx));
  const TensorShape s(std::move(dims));
  if (!s.valid()) throw FormatError(ctx + ": invalid shape '" + text + "'");
  return s;
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::size_t value_bytes(const FixedPointFormat& fmt) {
  return static_cast<std::size_t>((fmt.total_bits + 7) / 8);
}

const std::vector<std::string_view> kManifestKeys = {
    "format", "model", "arch.array_size", "arch.data_width_bits", "arch.frac_bits",
    "arch.local_depth", "arch.acc_depth", "arch.dram0_depth", "arch.dram1_depth",
    "arch.clock_mhz", "arch.dram_latency_factor", "arch.simd_lanes", "input_shape",
    "input_base", "output_shape", "output_base", "graph_macs", "instruction_count",
    "program_bytes", "constants_bytes", "checksum"};

}  // namespace

std::uint32_t bundle_checksum(const std::vector<std::uint8_t>& program,
                              const std::vector<std::uint8_t>& constants) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, program.data(), static_cast<uInt>(program.size()));
  crc = crc32(crc, constants.data(), static_cast<uInt>(constants.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_constants(const std::vector<std::int32_t>& raw,
                                           const FixedPointFormat& fmt) {
  const std::size_t w = value_bytes(fmt);
  std::vector<std::uint8_t> out;
  out.reserve(raw.size() * w);
  for (const std::int32_t v : raw) {
    if (v < fmt.storage_min() || v > fmt.storage_max()) {
      throw FormatError("constant " + std::to_string(v) + " outside the " +
                        std::to_string(fmt.total_bits) + "-bit storage range");
    }
    const auto u = static_cast<std::uint32_t>(v);
    for (std::size_t i = 0; i < w; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  return out;
}

std::vector<std::int32_t> decode_constants(const std::vector<std::uint8_t>& bytes,
                                           const FixedPointFormat& fmt) {
  const std::size_t w = value_bytes(fmt);
  if (bytes.size() % w != 0) {
    throw FormatError("constants stream length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(w));
  }
  std::vector<std::int32_t> out;
  out.reserve(bytes.size() / w);
  const int shift = 32 - static_cast<int>(8 * w);
  for (std::size_t off = 0; off < bytes.size(); off += w) {
    std::uint32_t u = 0;
    for (std::size_t i = 0; i < w; ++i) u |= std::uint32_t{bytes[off + i]} << (8 * i);
    // Sign-extend from the stored width.
    const auto v = static_cast<std::int32_t>(u << shift) >> shift;
    if (v < fmt.storage_min() || v > fmt.storage_max()) {
      throw FormatError("constant " + std::to_string(v) + " outside storage range");
    }
    out.push_back(v);
  }
  return out;
}

ArtifactBundle emit(const TcuProgram& prog, const ModelGraph& g) {
  const ShapeMap shapes = infer_shapes(g);
  if (!(prog.input.shape == g.input_shape) || !(prog.output.shape == shapes.at(g.output))) {
    throw ShapeError("program io shapes do not match graph '" + g.name + "'");
  }
  ArtifactBundle b;
  b.program = encode_program(prog.instructions);
  b.constants = encode_constants(prog.constants, prog.format());
  const ArchConfig& a = prog.arch;
  std::ostringstream os;
  os << "# TCU compiled model\n";
  os << "format = " << kBundleFormat << "\n";
  os << "model = " << prog.model_name << "\n";
  os << "arch.array_size = " << a.array_size << "\n";
  os << "arch.data_width_bits = " << a.data_width_bits << "\n";
  os << "arch.frac_bits = " << a.frac_bits << "\n";
  os << "arch.local_depth = " << a.local_depth << "\n";
  os << "arch.acc_depth = " << a.acc_depth << "\n";
  os << "arch.dram0_depth = " << a.dram0_depth << "\n";
  os << "arch.dram1_depth = " << a.dram1_depth << "\n";
  char clock[64];
  std::snprintf(clock, sizeof clock, "%.17g", a.clock_mhz);
  os << "arch.clock_mhz = " << clock << "\n";
  os << "arch.dram_latency_factor = " << a.dram_latency_factor << "\n";
  os << "arch.simd_lanes = " << a.simd_lanes << "\n";
  os << "input_shape = " << shape_text(prog.input.shape) << "\n";
  os << "input_base = " << prog.input.base << "\n";
  os << "output_shape = " << shape_text(prog.output.shape) << "\n";
  os << "output_base = " << prog.output.base << "\n";
  os << "graph_macs = " << prog.graph_macs << "\n";
  os << "instruction_count = " << prog.instructions.size() << "\n";
  os << "program_bytes = " << b.program.size() << "\n";
  os << "constants_bytes = " << b.constants.size() << "\n";
  os << "checksum = " << hex32(bundle_checksum(b.program, b.constants)) << "\n";
  b.manifest = os.str();
  return b;
}

TcuProgram load_bundle(const ArtifactBundle& bundle) {
  const KvDocument doc = KvDocument::parse(bundle.manifest, "manifest");
  doc.reject_unknown(kManifestKeys);
  if (doc.get_string("format") != kBundleFormat) {
    throw FormatError("manifest: unsupported format '" + doc.get_string("format") + "'");
  }
  if (static_cast<std::size_t>(doc.get_int("program_bytes")) != bundle.program.size() ||
      static_cast<std::size_t>(doc.get_int("constants_bytes")) != bundle.constants.size()) {
    throw ChecksumError("bundle stream sizes do not match the manifest");
  }
  const std::string& want = doc.get_string("checksum");
  const std::string got = hex32(bundle_checksum(bundle.program, bundle.constants));
  if (want != got) {
    throw ChecksumError("bundle checksum mismatch: manifest " + want + ", data " + got);
  }

  TcuProgram p;
  p.model_name = doc.get_string("model");
  ArchConfig& a = p.arch;
  a.array_size = doc.get_int("arch.array_size");
  a.data_width_bits = doc.get_int("arch.data_width_bits");
  a.frac_bits = doc.get_int("arch.frac_bits");
  a.local_depth = doc.get_int("arch.local_depth");
  a.acc_depth = doc.get_int("arch.acc_depth");
  a.dram0_depth = doc.get_int("arch.dram0_depth");
  a.dram1_depth = doc.get_int("arch.dram1_depth");
  a.clock_mhz = doc.get_real("arch.clock_mhz");
  a.dram_latency_factor = doc.get_int("arch.dram_latency_factor");
  a.simd_lanes = doc.get_int("arch.simd_lanes");
  require_valid(a);
  p.input = {parse_shape(doc.get_string("input_shape"), "manifest input_shape"),
             doc.get_int("input_base")};
  p.output = {parse_shape(doc.get_string("output_shape"), "manifest output_shape"),
              doc.get_int("output_base")};
  p.graph_macs = doc.get_int("graph_macs");
  p.instructions = decode_program(bundle.program);
  if (static_cast<std::int64_t>(p.instructions.size()) != doc.get_int("instruction_count")) {
    throw FormatError("manifest instruction_count does not match the program stream");
  }
  p.constants = decode_constants(bundle.constants, p.format());
  if (static_cast<std::int64_t>(p.constants.size()) % a.array_size != 0) {
    throw FormatError("constants are not a whole number of vectors");
  }
  return p;
}

TcuProgram load_bundle(const ArtifactBundle& bundle, const ArchConfig& runtime) {
  TcuProgram p = load_bundle(bundle);
  auto mismatch = [&](const char* field, std::int64_t built, std::int64_t run) {
    throw IncompatibleBundleError("bundle compiled for " + std::string(field) + "=" +
                                  std::to_string(built) + " but runtime has " +
                                  std::to_string(run));
  };
  if (p.arch.array_size != runtime.array_size) {
    mismatch("array_size", p.arch.array_size, runtime.array_size);
  }
  if (p.arch.data_width_bits != runtime.data_width_bits) {
    mismatch("data_width_bits", p.arch.data_width_bits, runtime.data_width_bits);
  }
  if (p.arch.frac_bits != runtime.frac_bits) {
    mismatch("frac_bits", p.arch.frac_bits, runtime.frac_bits);
  }
  return p;
}

std::filesystem::path write_bundle(const ArtifactBundle& b, const std::filesystem::path& dir,
                                   const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const auto manifest = dir / (stem + ".tmodel");
  write_binary_file(dir / (stem + ".tprog"), b.program);
  write_binary_file(dir / (stem + ".tdata"), b.constants);
  write_text_file(manifest, b.manifest);
  return manifest;
}

ArtifactBundle read_bundle(const std::filesystem::path& manifest) {
  ArtifactBundle b;
  b.manifest = read_text_file(manifest);
  auto sibling = [&](const char* ext) {
    auto p = manifest;
    p.replace_extension(ext);
    return p;
  };
  b.program = read_binary_file(sibling(".tprog"));
  b.constants = read_binary_file(sibling(".tdata"));
  return b;
}

}  // namespace tcu
