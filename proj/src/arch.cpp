#include "tcu/arch.hpp"

#include <cstdio>
#include <sstream>

#include "tcu/error.hpp"
#include "tcu/kv.hpp"

namespace tcu {

namespace {

// Resource model coefficients, calibrated once against the PYNQ-Z1 default
// (array_size 8, 16-bit data, local 8192 + acc 2048 vectors) so that the
// estimate reproduces the reported Zynq-7000 utilization:
//
//   resource | formula                                   | default
//   ---------+-------------------------------------------+--------
//   DSP      | round(A^2 * 85/64 * dsp_mult(width))      | 85
//   LUT      | 7339 + A^2 * 10 * width                   | 17579
//   FF       | 7260 + A^2 * 25 * width / 2               | 20060
//   BRAM     | ceil(mem_bits / 18432) + 1302             | 72 + 1302 = 1374
//   IO       | 36                                        | 36
//
// mem_bits = (local_depth + acc_depth) * A * width. The constant terms absorb
// the shell (DMA, interconnect, PS glue) that does not scale with the array.
constexpr std::int64_t kDspNum = 85;
constexpr std::int64_t kDspDen = 64;
constexpr std::int64_t kLutBase = 7339;
constexpr std::int64_t kLutPerPeBit = 10;
constexpr std::int64_t kFfBase = 7260;
constexpr std::int64_t kFfPerPeBitX2 = 25;
constexpr std::int64_t kBramBitsPerUnit = 18432;
constexpr std::int64_t kBramBase = 1302;
constexpr std::int64_t kIo = 36;

// DSP48 slices per multiplier for a given operand width.
std::int64_t dsp_mult(std::int64_t width) {
  if (width <= 18) return 1;
  if (width <= 27) return 2;
  return 4;
}

std::int64_t div_round_half_up(std::int64_t num, std::int64_t den) {
  return (2 * num + den) / (2 * den);
}

const std::vector<std::string_view> kArchKeys = {
    "array_size",   "data_width_bits", "frac_bits",
    "local_depth",  "acc_depth",       "dram0_depth",
    "dram1_depth",  "clock_mhz",       "dram_latency_factor",
    "simd_lanes"};

const std::vector<std::string_view> kBudgetKeys = {
    "lut_avail", "ff_avail", "bram_avail", "io_avail", "dsp_avail"};

}  // namespace

std::vector<Violation> validate_arch(const ArchConfig& c) {
  std::vector<Violation> v;
  if (c.array_size < 2) v.push_back({"array_size", "array_size must be >= 2"});
  if (c.data_width_bits > 32) {
    v.push_back({"data_width_bits", "data_width_bits must be <= 32"});
  }
  if (c.frac_bits <= 0) v.push_back({"frac_bits", "frac_bits must be > 0"});
  if (c.frac_bits >= c.data_width_bits) {
    v.push_back({"frac_bits", "frac_bits must be < data_width_bits"});
  }
  if (c.simd_lanes != c.array_size) {
    v.push_back({"simd_lanes", "simd_lanes must equal array_size"});
  }
  if (c.local_depth <= 0) v.push_back({"local_depth", "local_depth must be > 0"});
  if (c.acc_depth <= 0) v.push_back({"acc_depth", "acc_depth must be > 0"});
  if (c.dram0_depth <= 0) v.push_back({"dram0_depth", "dram0_depth must be > 0"});
  if (c.dram1_depth <= 0) v.push_back({"dram1_depth", "dram1_depth must be > 0"});
  if (!(c.clock_mhz > 0.0)) v.push_back({"clock_mhz", "clock_mhz must be > 0"});
  if (c.dram_latency_factor <= 0) {
    v.push_back({"dram_latency_factor", "dram_latency_factor must be > 0"});
  }
  return v;
}

void require_valid(const ArchConfig& cfg) {
  const auto v = validate_arch(cfg);
  if (v.empty()) return;
  std::string msg = "invalid architecture:";
  for (const auto& x : v) msg += " " + x.message + ";";
  throw InvalidArchError(msg);
}

const char* resource_name(Resource r) {
  switch (r) {
    case Resource::Lut: return "LUT";
    case Resource::Ff: return "FF";
    case Resource::Bram: return "BRAM";
    case Resource::Io: return "IO";
    case Resource::Dsp: return "DSP";
  }
  return "?";
}

std::int64_t available(const ResourceBudget& b, Resource r) {
  switch (r) {
    case Resource::Lut: return b.lut_avail;
    case Resource::Ff: return b.ff_avail;
    case Resource::Bram: return b.bram_avail;
    case Resource::Io: return b.io_avail;
    case Resource::Dsp: return b.dsp_avail;
  }
  return 0;
}

std::int64_t ResourceEstimate::used(Resource r) const {
  switch (r) {
    case Resource::Lut: return lut;
    case Resource::Ff: return ff;
    case Resource::Bram: return bram;
    case Resource::Io: return io;
    case Resource::Dsp: return dsp;
  }
  return 0;
}

std::int64_t ResourceEstimate::pct_centi(Resource r) const {
  switch (r) {
    case Resource::Lut: return lut_pct_centi;
    case Resource::Ff: return ff_pct_centi;
    case Resource::Bram: return bram_pct_centi;
    case Resource::Io: return io_pct_centi;
    case Resource::Dsp: return dsp_pct_centi;
  }
  return 0;
}

std::int64_t utilization_centi(std::int64_t used, std::int64_t avail) {
  if (avail <= 0) throw InvalidArchError("resource budget must be > 0");
  return div_round_half_up(used * 10000, avail);
}

ResourceEstimate estimate_resources(const ArchConfig& cfg,
                                    const ResourceBudget& budget) {
  require_valid(cfg);
  const std::int64_t pes = cfg.array_size * cfg.array_size;
  const std::int64_t w = cfg.data_width_bits;

  ResourceEstimate e;
  e.dsp = div_round_half_up(pes * kDspNum * dsp_mult(w), kDspDen);
  e.lut = kLutBase + pes * kLutPerPeBit * w;
  e.ff = kFfBase + pes * kFfPerPeBitX2 * w / 2;
  const std::int64_t mem_bits =
      (cfg.local_depth + cfg.acc_depth) * cfg.array_size * w;
  e.bram = (mem_bits + kBramBitsPerUnit - 1) / kBramBitsPerUnit + kBramBase;
  e.io = kIo;

  e.lut_pct_centi = utilization_centi(e.lut, budget.lut_avail);
  e.ff_pct_centi = utilization_centi(e.ff, budget.ff_avail);
  e.bram_pct_centi = utilization_centi(e.bram, budget.bram_avail);
  e.io_pct_centi = utilization_centi(e.io, budget.io_avail);
  e.dsp_pct_centi = utilization_centi(e.dsp, budget.dsp_avail);
  return e;
}

FitVerdict check_fit(const ResourceEstimate& est, const ResourceBudget& budget) {
  FitVerdict v;
  for (auto r : kAllResources) {
    if (est.used(r) > available(budget, r)) v.overflowing.push_back(r);
  }
  return v;
}

ArchConfig parse_arch(const std::string& text, const std::string& source) {
  const auto doc = KvDocument::parse(text, source);
  doc.reject_unknown(kArchKeys);
  ArchConfig c;
  c.array_size = doc.get_int("array_size");
  c.data_width_bits = doc.get_int("data_width_bits");
  c.frac_bits = doc.get_int("frac_bits");
  c.local_depth = doc.get_int("local_depth");
  c.acc_depth = doc.get_int("acc_depth");
  c.dram0_depth = doc.get_int("dram0_depth");
  c.dram1_depth = doc.get_int("dram1_depth");
  c.clock_mhz = doc.get_real("clock_mhz");
  c.dram_latency_factor = doc.get_int("dram_latency_factor");
  c.simd_lanes = doc.get_int("simd_lanes");
  return c;
}

ArchConfig load_arch(const std::filesystem::path& path) {
  return parse_arch(read_text_file(path), path.string());
}

std::string format_arch(const ArchConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "array_size = " << c.array_size << "\n"
     << "data_width_bits = " << c.data_width_bits << "\n"
     << "frac_bits = " << c.frac_bits << "\n"
     << "local_depth = " << c.local_depth << "\n"
     << "acc_depth = " << c.acc_depth << "\n"
     << "dram0_depth = " << c.dram0_depth << "\n"
     << "dram1_depth = " << c.dram1_depth << "\n"
     << "clock_mhz = " << c.clock_mhz << "\n"
     << "dram_latency_factor = " << c.dram_latency_factor << "\n"
     << "simd_lanes = " << c.simd_lanes << "\n";
  return os.str();
}

ResourceBudget parse_budget(const std::string& text, const std::string& source) {
  const auto doc = KvDocument::parse(text, source);
  doc.reject_unknown(kBudgetKeys);
  ResourceBudget b;
  b.lut_avail = doc.get_int("lut_avail");
  b.ff_avail = doc.get_int("ff_avail");
  b.bram_avail = doc.get_int("bram_avail");
  b.io_avail = doc.get_int("io_avail");
  b.dsp_avail = doc.get_int("dsp_avail");
  for (auto r : kAllResources) {
    if (available(b, r) <= 0) {
      throw FormatError(source + ": " + resource_name(r) +
                        " availability must be > 0");
    }
  }
  return b;
}

ResourceBudget load_budget(const std::filesystem::path& path) {
  return parse_budget(read_text_file(path), path.string());
}

std::string format_budget(const ResourceBudget& b) {
  std::ostringstream os;
  os << "lut_avail = " << b.lut_avail << "\n"
     << "ff_avail = " << b.ff_avail << "\n"
     << "bram_avail = " << b.bram_avail << "\n"
     << "io_avail = " << b.io_avail << "\n"
     << "dsp_avail = " << b.dsp_avail << "\n";
  return os.str();
}

std::string format_estimate(const ResourceEstimate& est,
                            const ResourceBudget& budget) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %12s %12s %14s\n", "Resource",
                "Utilization", "Available", "% Utilization");
  os << line;
  for (auto r : kAllResources) {
    const auto c = est.pct_centi(r);
    std::snprintf(line, sizeof line, "%-8s %12lld %12lld %11lld.%02lld\n",
                  resource_name(r), static_cast<long long>(est.used(r)),
                  static_cast<long long>(available(budget, r)),
                  static_cast<long long>(c / 100),
                  static_cast<long long>(c % 100));
    os << line;
  }
  return os.str();
}

}  // namespace tcu
