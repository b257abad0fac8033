#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tcu {

/// TCU hardware parameters. Memory depths are counted in vectors of
/// `array_size` lanes.
struct ArchConfig {
  std::int64_t array_size = 8;
  std::int64_t data_width_bits = 16;
  std::int64_t frac_bits = 8;
  std::int64_t local_depth = 8192;
  std::int64_t acc_depth = 2048;
  std::int64_t dram0_depth = 1048576;
  std::int64_t dram1_depth = 1048576;
  double clock_mhz = 100.0;
  std::int64_t dram_latency_factor = 4;
  std::int64_t simd_lanes = 8;

  /// The PYNQ-Z1 default. The TCU parameters are an assumption; only the
  /// 100 MHz clock is a published figure.
  static ArchConfig pynq_z1() { return {}; }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct Violation {
  std::string field;
  std::string message;
};

/// Every violated ArchConfig invariant; empty means valid.
std::vector<Violation> validate_arch(const ArchConfig& cfg);

/// Throws InvalidArchError listing all violations if `cfg` is invalid.
void require_valid(const ArchConfig& cfg);

struct ResourceBudget {
  std::int64_t lut_avail = 74000;
  std::int64_t ff_avail = 106400;
  std::int64_t bram_avail = 3300;
  std::int64_t io_avail = 150;
  std::int64_t dsp_avail = 160;

  static ResourceBudget zynq7000() { return {}; }

  friend bool operator==(const ResourceBudget&, const ResourceBudget&) = default;
};

enum class Resource { Lut, Ff, Bram, Io, Dsp };

inline constexpr Resource kAllResources[] = {Resource::Lut, Resource::Ff,
                                             Resource::Bram, Resource::Io,
                                             Resource::Dsp};

const char* resource_name(Resource r);
std::int64_t available(const ResourceBudget& b, Resource r);

struct ResourceEstimate {
  std::int64_t lut = 0;
  std::int64_t ff = 0;
  std::int64_t bram = 0;
  std::int64_t io = 0;
  std::int64_t dsp = 0;
  // Percent utilization rounded half-up to two decimals, stored as
  // hundredths of a percent so the rounding is exact.
  std::int64_t lut_pct_centi = 0;
  std::int64_t ff_pct_centi = 0;
  std::int64_t bram_pct_centi = 0;
  std::int64_t io_pct_centi = 0;
  std::int64_t dsp_pct_centi = 0;

  std::int64_t used(Resource r) const;
  std::int64_t pct_centi(Resource r) const;
  double pct(Resource r) const { return static_cast<double>(pct_centi(r)) / 100.0; }

  friend bool operator==(const ResourceEstimate&, const ResourceEstimate&) = default;
};

/// Calibrated analytical model. Coefficients live in arch.cpp.
ResourceEstimate estimate_resources(const ArchConfig& cfg,
                                    const ResourceBudget& budget);

/// 100 * used / avail rounded half-up to hundredths; avail must be > 0.
std::int64_t utilization_centi(std::int64_t used, std::int64_t avail);

struct FitVerdict {
  std::vector<Resource> overflowing;
  bool fits() const { return overflowing.empty(); }
};

FitVerdict check_fit(const ResourceEstimate& est, const ResourceBudget& budget);

ArchConfig load_arch(const std::filesystem::path& path);
ArchConfig parse_arch(const std::string& text, const std::string& source);
std::string format_arch(const ArchConfig& cfg);

ResourceBudget load_budget(const std::filesystem::path& path);
ResourceBudget parse_budget(const std::string& text, const std::string& source);
std::string format_budget(const ResourceBudget& b);

/// Table rendering used by `tcu arch`.
std::string format_estimate(const ResourceEstimate& est,
                            const ResourceBudget& budget);

}  // namespace tcu
