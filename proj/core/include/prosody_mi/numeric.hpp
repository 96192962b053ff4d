#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace prosody_mi {

// Pairwise (cascade) summation. Result depends only on the input order, so
// reductions built on it are bit-stable regardless of how the per-element
// values were computed in parallel.
double pairwise_sum(std::span<const double> values);
double pairwise_mean(std::span<const double> values);

// Number of worker threads used by parallel loops (default: hardware
// concurrency). A value < 1 restores the default.
void set_num_threads(int n);
int num_threads();

// Runs body(begin, end) over contiguous static chunks of [0, n).
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

// exp(x) for x <= 0 without branches, so loops over it vectorise. Returns 0
// below -708; relative error within a few ulp of std::exp elsewhere.
inline double exp_nonpositive(double x) {
  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  const double xc = x < -708.0 ? -708.0 : x;
  const double t = xc * kLog2e + kShifter;
  const double n = t - kShifter;
  const double r = (xc - n * kLn2Hi) - n * kLn2Lo;  // |r| <= ln2 / 2
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const auto bits = (__builtin_bit_cast(std::uint64_t, t) + 1023u) << 52;
  const double scaled = p * __builtin_bit_cast(double, bits);
  return x < -708.0 ? 0.0 : scaled;
}

}  // namespace prosody_mi
