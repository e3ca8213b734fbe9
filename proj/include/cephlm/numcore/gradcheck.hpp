#pragma once

#include <functional>
#include <span>

#include "cephlm/numcore/tensor.hpp"

namespace cephlm::numcore {

inline constexpr double kGradcheckFloor = 1e-6;

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the reverse-mode gradient of a scalar function against
/// fourth-order central differences with step eps at every coordinate of x.
///
/// Returns max_i |analytic_i - central_i| / max(|analytic_i|, |central_i|, kGradcheckFloor).
/// x is left with its original values; its grad buffer is overwritten.
double finite_difference_check(const ScalarFn& f, Tensor<double> x, double eps);

// Same comparison for a function of several parameters, all perturbed in turn.
// Used for whole-model checks where f closes over the parameter tensors.
double finite_difference_check(const std::function<Tensor<double>()>& f, std::span<Tensor<double>> params,
                               double eps);

}  // namespace cephlm::numcore
