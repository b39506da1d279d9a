#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "htmd/separator.hpp"

namespace htmd::model {

struct SeparationResult {
    std::vector<float> vocals;
    std::vector<float> intermediate;  // empty for single-stage models
};

// Chunks the mono mixture at the model input length with the given hop (default
// half a chunk), runs the model in eval mode and overlap-adds the estimates.
SeparationResult separate(Separator<float>& model, std::span<const float> mixture, std::size_t hop = 0,
                          std::size_t batch_size = 8);

}  // namespace htmd::model
