#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evfuse/tensor.hpp"

namespace evfuse {

struct GradCheckSample {
    std::size_t param;  // index into the params list
    std::size_t index;  // flat element index inside that parameter
};

struct GradCheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst_rel_err = 0.0;
    bool pass = false;
};

// Central-difference check of analytic gradients.
//
// f evaluates the (pure, deterministic) scalar objective at the current
// parameter values; params are the live parameter tensors, perturbed in
// place and restored; analytic[i] is the flat gradient for params[i].
// Step per element: step_scale * max(1, |p|). Relative error:
// |analytic - numeric| / max(1, |analytic|, |numeric|).
//
// Purity is enforced: f is evaluated twice up front and a bitwise mismatch
// raises ContractError.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  std::vector<std::pair<std::string, Tensor>>& params,
                                  const std::vector<std::vector<double>>& analytic,
                                  const std::vector<GradCheckSample>& samples, double step_scale,
                                  double tolerance);

}  // namespace evfuse
