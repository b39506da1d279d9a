#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "htmd/tensor.hpp"

namespace htmd::diff {

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    std::vector<Shape> tested_shapes;
    std::uint64_t seed = 0;
    std::size_t coordinates_checked = 0;
    // Coordinates where every step crossed a leaky_relu kink (one-sided differences
    // disagree); they are excluded from max_rel_error.
    std::size_t kinks_skipped = 0;
};

struct GradCheckOptions {
    // Tried per coordinate, largest first. Large steps lose to kinks, small ones to
    // roundoff on tiny gradients; each coordinate reports its best smooth step.
    std::vector<double> steps{1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
    // 0 checks every coordinate; otherwise a seeded random subset of this size per tensor.
    std::size_t max_coordinates_per_tensor = 0;
    // Resample generated inputs that fall within this distance of zero (leaky_relu kink).
    double kink_margin = 0.0;
    double kink_detection_ratio = 1e-3;
};

// Compares backward() gradients of a scalar loss with central finite differences for
// every tensor in `wrt`. The loss closure is re-evaluated on perturbed values in place.
GradCheckReport grad_check(const std::string& name, const std::function<Tensor<double>()>& loss,
                           const std::vector<Tensor<double>>& wrt, std::uint64_t seed,
                           const GradCheckOptions& options = {});

// Generates uniform(-1, 1) inputs of the given shapes, projects the op output onto a
// fixed random direction and checks gradients for all inputs.
GradCheckReport grad_check_op(const std::string& name,
                              const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& op,
                              const std::vector<Shape>& input_shapes, std::uint64_t seed,
                              const GradCheckOptions& options = {});

}  // namespace htmd::diff
