#pragma once

#include <cstdint>

#include "tcu/arch.hpp"
#include "tcu/tensor.hpp"

namespace tcu {

/// Signed two's-complement fixed point with one global binary point.
/// Storage values live in int32; accumulator values in int64.
struct FixedPointFormat {
  int total_bits = 16;
  int frac_bits = 8;
  int acc_bits = 48;

  static FixedPointFormat from_arch(const ArchConfig& arch);

  bool valid() const {
    return frac_bits > 0 && frac_bits < total_bits && total_bits <= 32 &&
           acc_bits >= 2 * total_bits && acc_bits <= 64;
  }

  std::int32_t storage_min() const {
    return static_cast<std::int32_t>(-(std::int64_t{1} << (total_bits - 1)));
  }
  std::int32_t storage_max() const {
    return static_cast<std::int32_t>((std::int64_t{1} << (total_bits - 1)) - 1);
  }
  std::int64_t acc_min() const;
  std::int64_t acc_max() const;
  double scale() const { return static_cast<double>(std::int64_t{1} << frac_bits); }

  friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;
};

/// clamp(round_half_even(x * 2^frac)). NaN maps to 0.
std::int32_t quantize(double x, const FixedPointFormat& fmt);
double dequantize(std::int64_t raw, const FixedPointFormat& fmt);

std::int32_t saturate_storage(std::int64_t v, const FixedPointFormat& fmt);
std::int64_t saturate_acc(__int128 v, const FixedPointFormat& fmt);

/// acc + a * b, exact in 128 bits, then saturated to acc_bits.
inline std::int64_t mac_acc(std::int64_t acc, std::int32_t a, std::int32_t b,
                            const FixedPointFormat& fmt) {
  const __int128 v = static_cast<__int128>(acc) +
                     static_cast<__int128>(a) * static_cast<__int128>(b);
  return saturate_acc(v, fmt);
}

/// Saturating accumulator addition.
std::int64_t acc_add(std::int64_t a, std::int64_t b, const FixedPointFormat& fmt);

/// Storage value moved to accumulator scale (shift left by frac_bits).
std::int64_t widen(std::int32_t raw, const FixedPointFormat& fmt);

/// Shift right by frac_bits, rounding half to even, then saturate to storage.
std::int32_t rescale(std::int64_t acc, const FixedPointFormat& fmt);

/// Fixed-point tensor: shape + storage-width raw values.
struct QTensor {
  Tensor<std::int32_t> values;
  FixedPointFormat format;

  const TensorShape& shape() const { return values.shape; }
  std::int64_t size() const { return values.size(); }
  std::int32_t operator[](std::int64_t i) const { return values[i]; }
};

QTensor quantize(const TensorF& x, const FixedPointFormat& fmt);
TensorF dequantize(const QTensor& q);

}  // namespace tcu
