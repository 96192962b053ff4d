#pragma once

#include <cstddef>
#include <vector>

namespace prosody_mi::density::detail {

// log sum_i exp(-|z - w_i|^2 / (2h)) over n whitened points stored column
// by column (n values for dimension 0, then dimension 1, ...).
double log_kernel_sum(const double* columns, std::ptrdiff_t n, int d,
                      const double* z, double h, std::vector<double>& scratch);

}  // namespace prosody_mi::density::detail
