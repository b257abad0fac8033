#include "tcu/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tcu {

FixedPointFormat FixedPointFormat::from_arch(const ArchConfig& arch) {
  FixedPointFormat f;
  f.total_bits = static_cast<int>(arch.data_width_bits);
  f.frac_bits = static_cast<int>(arch.frac_bits);
  f.acc_bits = std::max(48, 2 * f.total_bits);
  return f;
}

std::int64_t FixedPointFormat::acc_min() const {
  if (acc_bits >= 64) return std::numeric_limits<std::int64_t>::min();
  return -(std::int64_t{1} << (acc_bits - 1));
}

std::int64_t FixedPointFormat::acc_max() const {
  if (acc_bits >= 64) return std::numeric_limits<std::int64_t>::max();
  return (std::int64_t{1} << (acc_bits - 1)) - 1;
}

std::int32_t saturate_storage(std::int64_t v, const FixedPointFormat& fmt) {
  return static_cast<std::int32_t>(
      std::clamp<std::int64_t>(v, fmt.storage_min(), fmt.storage_max()));
}

std::int64_t saturate_acc(__int128 v, const FixedPointFormat& fmt) {
  if (v < fmt.acc_min()) return fmt.acc_min();
  if (v > fmt.acc_max()) return fmt.acc_max();
  return static_cast<std::int64_t>(v);
}

std::int32_t quantize(double x, const FixedPointFormat& fmt) {
  if (std::isnan(x)) return 0;
  const double scaled = std::ldexp(x, fmt.frac_bits);
  if (scaled >= static_cast<double>(fmt.storage_max())) return fmt.storage_max();
  if (scaled <= static_cast<double>(fmt.storage_min())) return fmt.storage_min();
  // Explicit half-to-even so the result never depends on the FP rounding mode.
  const double fl = std::floor(scaled);
  const double diff = scaled - fl;
  auto r = static_cast<std::int64_t>(fl);
  if (diff > 0.5 || (diff == 0.5 && (r & 1) != 0)) ++r;
  return saturate_storage(r, fmt);
}

double dequantize(std::int64_t raw, const FixedPointFormat& fmt) {
  return std::ldexp(static_cast<double>(raw), -fmt.frac_bits);
}

std::int64_t acc_add(std::int64_t a, std::int64_t b, const FixedPointFormat& fmt) {
  return saturate_acc(static_cast<__int128>(a) + b, fmt);
}

std::int64_t widen(std::int32_t raw, const FixedPointFormat& fmt) {
  return saturate_acc(static_cast<__int128>(raw) << fmt.frac_bits, fmt);
}

std::int32_t rescale(std::int64_t acc, const FixedPointFormat& fmt) {
  const int f = fmt.frac_bits;
  std::int64_t q = acc >> f;  // floor
  const std::int64_t rem = acc - static_cast<std::int64_t>(
                                     static_cast<std::uint64_t>(q) << f);
  const std::int64_t half = std::int64_t{1} << (f - 1);
  if (rem > half || (rem == half && (q & 1) != 0)) ++q;
  return saturate_storage(q, fmt);
}

QTensor quantize(const TensorF& x, const FixedPointFormat& fmt) {
  QTensor q{Tensor<std::int32_t>(x.shape), fmt};
  for (std::int64_t i = 0; i < x.size(); ++i) q.values[i] = quantize(x[i], fmt);
  return q;
}

TensorF dequantize(const QTensor& q) {
  TensorF x(q.shape());
  for (std::int64_t i = 0; i < q.size(); ++i) x[i] = dequantize(q[i], q.format);
  return x;
}

}  // namespace tcu
