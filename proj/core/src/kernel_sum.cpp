#include "kernel_sum.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "prosody_mi/numeric.hpp"

namespace prosody_mi::density::detail {

namespace {

constexpr std::size_t kLanes = 8;
typedef double VecD __attribute__((vector_size(kLanes * sizeof(double))));
typedef long long VecI __attribute__((vector_size(kLanes * sizeof(double))));

VecD splat(double v) {
  VecD out;
  for (std::size_t i = 0; i < kLanes; ++i) out[i] = v;
  return out;
}

// Lane-wise exp_nonpositive; same operation sequence, so identical results.
VecD exp_nonpositive_vec(VecD x) {
  const VecD lo = splat(-708.0);
  const VecD xc = x < lo ? lo : x;
  const VecD shifter = splat(6755399441055744.0);
  const VecD t = xc * splat(1.4426950408889634074) + shifter;
  const VecD n = t - shifter;
  const VecD r = (xc - n * splat(6.93147180369123816490e-01)) -
                 n * splat(1.90821492927058770002e-10);
  VecD p = splat(1.0 / 6227020800.0);
  p = p * r + splat(1.0 / 479001600.0);
  p = p * r + splat(1.0 / 39916800.0);
  p = p * r + splat(1.0 / 3628800.0);
  p = p * r + splat(1.0 / 362880.0);
  p = p * r + splat(1.0 / 40320.0);
  p = p * r + splat(1.0 / 5040.0);
  p = p * r + splat(1.0 / 720.0);
  p = p * r + splat(1.0 / 120.0);
  p = p * r + splat(1.0 / 24.0);
  p = p * r + splat(1.0 / 6.0);
  p = p * r + splat(0.5);
  p = p * r + splat(1.0);
  p = p * r + splat(1.0);
  const VecI bits = ((VecI)t + 1023) << 52;
  const VecD scaled = p * (VecD)bits;
  return x < lo ? splat(0.0) : scaled;
}

}  // namespace

double log_kernel_sum(const double* columns, std::ptrdiff_t n, int d,
                      const double* z, double h, std::vector<double>& scratch) {
  const auto count = static_cast<std::size_t>(n);
  scratch.assign(count, 0.0);
  double* q = scratch.data();
  for (int j = 0; j < d; ++j) {
    const double zj = z[j];
    const double* col = columns + static_cast<std::size_t>(j) * count;
    for (std::size_t i = 0; i < count; ++i) {
      const double diff = zj - col[i];
      q[i] += diff * diff;
    }
  }
  double qmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) qmin = std::min(qmin, q[i]);

  const double scale = -0.5 / h;
  const VecD vmin = splat(qmin);
  const VecD vscale = splat(scale);
  // Four independent blocks per step keep the polynomial chains overlapped.
  constexpr std::size_t kBlock = 4 * kLanes;
  VecD acc0 = splat(0.0), acc1 = acc0, acc2 = acc0, acc3 = acc0;
  const std::size_t full = count - count % kBlock;
  for (std::size_t i = 0; i < full; i += kBlock) {
    VecD v0, v1, v2, v3;
    std::memcpy(&v0, q + i, sizeof(VecD));
    std::memcpy(&v1, q + i + kLanes, sizeof(VecD));
    std::memcpy(&v2, q + i + 2 * kLanes, sizeof(VecD));
    std::memcpy(&v3, q + i + 3 * kLanes, sizeof(VecD));
    acc0 += exp_nonpositive_vec((v0 - vmin) * vscale);
    acc1 += exp_nonpositive_vec((v1 - vmin) * vscale);
    acc2 += exp_nonpositive_vec((v2 - vmin) * vscale);
    acc3 += exp_nonpositive_vec((v3 - vmin) * vscale);
  }
  const VecD vacc = (acc0 + acc1) + (acc2 + acc3);
  double acc = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) acc += vacc[l];
  for (std::size_t i = full; i < count; ++i) acc += exp_nonpositive((q[i] - qmin) * scale);
  return qmin * scale + std::log(acc);
}

}  // namespace prosody_mi::density::detail
