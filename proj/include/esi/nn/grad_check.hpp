#pragma once

#include <functional>

#include "esi/tensor.hpp"

namespace esi::nn {

// Scalar function of x; when grad != nullptr it must also write d f / d x (same dims as x).
using DifferentiableFn = std::function<double(const Tensor& x, Tensor* grad)>;

// Central differences (f(x+h) - f(x-h)) / 2h per coordinate against the analytic gradient.
// Per-coordinate error |a - n| / max(|a|, |n|, floor), floor = 1e-4 * max_j |a_j| + 1e-12, so
// coordinates four orders of magnitude below the dominant gradient are judged on that scale.
double grad_check(const DifferentiableFn& f, const Tensor& x, double h);

}  // namespace esi::nn
