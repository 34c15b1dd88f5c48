#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dropblock::tooling {

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// gradients that are zero up to rounding from reporting huge ratios.
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Central differences (f(x + eps) - f(x - eps)) / 2 eps for each element of
/// `x`; `x` is restored afterwards.
std::vector<double> central_differences(const std::function<double()>& f, std::span<double> x,
                                        double eps = 1e-5);

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool passed() const { return max_relative_error < tolerance; }
};

GradCheckResult compare_gradients(std::string name, std::span<const double> analytic,
                                  std::span<const double> numeric, double tolerance);

/// Finite-difference checks for every layer backward pass, dropblock_grad
/// with a fixed mask, and all parameters of a two-conv-layer network on a
/// four-sample batch.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace dropblock::tooling
