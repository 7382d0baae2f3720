#pragma once

#include <functional>
#include <span>

#include "arnn/tensor.hpp"

namespace arnn {

// Compares reverse-mode gradients of f with central differences
// (f(p + eps) - f(p - eps)) / 2eps over every coordinate of every parameter.
// Returns max |analytic - numeric| / max(1e-8, |analytic| + |numeric|);
// NaN anywhere yields NaN. Parameter gradients are overwritten.
double finite_diff_check(const std::function<Tensor()>& f, std::span<const Tensor> params,
                         double epsilon = 1e-5);

}  // namespace arnn
