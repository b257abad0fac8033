#include "doctest.h"

#include <cmath>

#include "tcu/ecg.hpp"
#include "tcu/quant.hpp"

using namespace tcu;

namespace {

const FixedPointFormat q16;

// Exact quotient-and-remainder rounding, written without shifts.
std::int64_t half_even_div(__int128 v, std::int64_t d) {
  __int128 q = v / d;
  __int128 r = v % d;
  if (r < 0) {
    q -= 1;
    r += d;
  }
  if (2 * r > d || (2 * r == d && (q & 1) != 0)) q += 1;
  return static_cast<std::int64_t>(q);
}

std::int64_t clamp_storage(std::int64_t v) { return std::clamp<std::int64_t>(v, -32768, 32767); }

}  // namespace

TEST_CASE("format bounds") {
  CHECK(q16.valid());
  CHECK(q16.storage_min() == -32768);
  CHECK(q16.storage_max() == 32767);
  CHECK(q16.acc_max() == (std::int64_t{1} << 47) - 1);
  CHECK(q16.acc_min() == -(std::int64_t{1} << 47));
  CHECK(FixedPointFormat::from_arch(ArchConfig{}) == q16);
  CHECK_FALSE(FixedPointFormat{16, 16, 48}.valid());
  CHECK_FALSE(FixedPointFormat{16, 8, 24}.valid());
}

TEST_CASE("quantize examples") {
  CHECK(quantize(1.5, q16) == 384);
  CHECK(quantize(200.0, q16) == 32767);
  CHECK(quantize(-200.0, q16) == -32768);
  CHECK(quantize(0.0, q16) == 0);
  CHECK(dequantize(384, q16) == 1.5);
}

TEST_CASE("quantize ties go to even") {
  CHECK(quantize(0.5 / 256, q16) == 0);
  CHECK(quantize(1.5 / 256, q16) == 2);
  CHECK(quantize(2.5 / 256, q16) == 2);
  CHECK(quantize(-0.5 / 256, q16) == 0);
  CHECK(quantize(-1.5 / 256, q16) == -2);
  CHECK(quantize(-2.5 / 256, q16) == -2);
}

TEST_CASE("round trip error is at most half a step") {
  PipelineRng rng(11);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const double x = -100.0 + 200.0 * rng.uniform();
    const auto raw = quantize(x, q16);
    if (raw == q16.storage_min() || raw == q16.storage_max()) continue;
    ++checked;
    CHECK(std::abs(dequantize(raw, q16) - x) <= std::ldexp(1.0, -9));
  }
  CHECK(checked > 900);
}

TEST_CASE("quantize is monotone") {
  PipelineRng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const double a = -200.0 + 400.0 * rng.uniform();
    const double b = a + rng.uniform() * 0.01;
    CHECK(quantize(a, q16) <= quantize(b, q16));
  }
}

TEST_CASE("mac examples") {
  CHECK(mac_acc(0, quantize(1.0, q16), quantize(1.0, q16), q16) == 65536);
  for (std::int64_t x : {std::int64_t{0}, std::int64_t{-5}, std::int64_t{123456789}}) {
    CHECK(mac_acc(x, quantize(0.0, q16), 32767, q16) == x);
  }
  CHECK(mac_acc(q16.acc_max(), 32767, 32767, q16) == q16.acc_max());
  CHECK(mac_acc(q16.acc_min(), -32768, 32767, q16) == q16.acc_min());
}

TEST_CASE("mac is exact below the accumulator bound") {
  PipelineRng rng(13);
  const __int128 bound = __int128{1} << 47;
  for (int i = 0; i < 5000; ++i) {
    const auto acc = static_cast<std::int64_t>(rng.below(std::int64_t{1} << 46)) -
                     (std::int64_t{1} << 45);
    const auto a = static_cast<std::int32_t>(rng.below(65536) - 32768);
    const auto b = static_cast<std::int32_t>(rng.below(65536) - 32768);
    const __int128 exact = __int128{acc} + __int128{a} * b;
    if (exact >= bound || exact < -bound) continue;
    CHECK(mac_acc(acc, a, b, q16) == static_cast<std::int64_t>(exact));
  }
}

TEST_CASE("rescale examples") {
  CHECK(rescale(65536, q16) == 256);
  CHECK(rescale(65664, q16) == 256);  // 256.5 ties to even
  CHECK(rescale(65664 + 256, q16) == 258);  // 257.5 ties to even
  CHECK(rescale(-(std::int64_t{1} << 40), q16) == -32768);
  CHECK(rescale(std::int64_t{1} << 40, q16) == 32767);
}

TEST_CASE("rescale agrees with an exact division oracle") {
  PipelineRng rng(14);
  for (int i = 0; i < 20000; ++i) {
    std::int64_t acc = rng.below(std::int64_t{1} << 26) - (std::int64_t{1} << 25);
    if (i % 4 == 0) acc = (acc & ~std::int64_t{255}) | 128;  // force a tie
    CAPTURE(acc);
    CHECK(rescale(acc, q16) == clamp_storage(half_even_div(acc, 256)));
  }
}

TEST_CASE("widen and rescale are inverse on storage values") {
  for (std::int32_t r = -32768; r <= 32767; r += 37) CHECK(rescale(widen(r, q16), q16) == r);
}

TEST_CASE("dot product via mac matches double precision") {
  // Operands are drawn on the fixed-point grid, so only the final rescale
  // rounds.
  PipelineRng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    std::int64_t acc = 0;
    double want = 0.0;
    for (int i = 0; i < 64; ++i) {
      const double a = static_cast<double>(rng.below(513) - 256) / 256.0;
      const double b = static_cast<double>(rng.below(513) - 256) / 256.0;
      want += a * b;
      acc = mac_acc(acc, quantize(a, q16), quantize(b, q16), q16);
    }
    CHECK(std::abs(dequantize(rescale(acc, q16), q16) - want) <= std::ldexp(1.0, -7));
  }
}

TEST_CASE("other formats") {
  const FixedPointFormat f{12, 5, 24};
  CHECK(f.valid());
  CHECK(quantize(1.0, f) == 32);
  CHECK(quantize(1000.0, f) == 2047);
  CHECK(rescale(32 * 32, f) == 32);
  CHECK(mac_acc(f.acc_max(), 1, 1, f) == (std::int64_t{1} << 23) - 1);
}

TEST_CASE("tensor quantization") {
  TensorF x(TensorShape{2, 2});
  x[0] = 1.0;
  x[1] = -0.5;
  x[2] = 300.0;
  x[3] = 0.25;
  const QTensor q = quantize(x, q16);
  CHECK(q.shape() == x.shape);
  CHECK(q[0] == 256);
  CHECK(q[1] == -128);
  CHECK(q[2] == 32767);
  CHECK(q[3] == 64);
  const TensorF y = dequantize(q);
  CHECK(y[1] == -0.5);
}
