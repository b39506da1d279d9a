#include "htmd/inference.hpp"

#include <algorithm>

#include "htmd/audio_io.hpp"

namespace htmd::model {

SeparationResult separate(Separator<float>& model, std::span<const float> mixture, std::size_t hop,
                          std::size_t batch_size) {
    const std::size_t L = model.config().input_length;
    const audio::ChunkPlan plan{L, hop ? hop : L / 2};
    const auto frames = audio::chunk(mixture, plan);
    const bool two_stage = model.config().has_intermediate();
    std::vector<std::vector<float>> finals, mids;

    const bool was_training = model.training();
    model.set_training(false);
    diff::NoGradGuard guard;
    batch_size = std::max<std::size_t>(1, batch_size);
    for (std::size_t start = 0; start < frames.size(); start += batch_size) {
        const std::size_t B = std::min(batch_size, frames.size() - start);
        diff::Array<float> x({B, 1, L});
        for (std::size_t b = 0; b < B; ++b) std::copy(frames[start + b].begin(), frames[start + b].end(), x.data() + b * L);
        const auto out = model.forward(diff::Tensor<float>(std::move(x)));
        for (std::size_t b = 0; b < B; ++b) {
            const float* f = out.final_estimate.value().data() + b * L;
            finals.emplace_back(f, f + L);
            if (two_stage) {
                const float* m = out.intermediate.value().data() + b * L;
                mids.emplace_back(m, m + L);
            }
        }
    }
    model.set_training(was_training);

    SeparationResult result;
    result.vocals = audio::overlap_add(finals, plan, mixture.size());
    if (two_stage) result.intermediate = audio::overlap_add(mids, plan, mixture.size());
    return result;
}

}  // namespace htmd::model
