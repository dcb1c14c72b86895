#pragma once

#include <vector>

#include "lorac/tensor.hpp"

namespace lorac::linalg {

// Singular values of a rank-2 tensor, descending. One-sided Jacobi in double
// precision; intended for the small matrices that show up in rank checks.
std::vector<double> singular_values(const Tensor& m);

// Count of singular values > rel_tol * sigma_max (0 for an all-zero matrix).
int numerical_rank(const Tensor& m, double rel_tol);

}  // namespace lorac::linalg
