#include "gradient_suite.hpp"

#include "htmd/losses.hpp"
#include "htmd/ops.hpp"
#include "htmd/separator.hpp"

using namespace htmd;
using namespace htmd::diff;

namespace suite {

namespace {

using Inputs = std::vector<Tensor<double>>;

Tensor<double> none() { return Tensor<double>(); }

}  // namespace

std::vector<GradCheckReport> primitive_checks(std::uint64_t seed) {
    std::vector<GradCheckReport> out;
    GradCheckOptions opt;
    GradCheckOptions kinked;
    kinked.kink_margin = 1e-3;

    out.push_back(grad_check_op("conv1d", [](const Inputs& in) { return conv1d(in[0], in[1], in[2], Conv1dOptions{}); },
                                {{2, 3, 11}, {4, 3, 3}, {4}}, seed, opt));
    out.push_back(grad_check_op(
        "conv1d_strided_dilated",
        [](const Inputs& in) { return conv1d(in[0], in[1], in[2], Conv1dOptions{2, 2, 1, Padding::none}); },
        {{2, 2, 17}, {3, 2, 3}, {3}}, seed, opt));
    out.push_back(grad_check_op(
        "conv1d_depthwise_same",
        [](const Inputs& in) { return conv1d(in[0], in[1], in[2], Conv1dOptions{1, 4, 4, Padding::same}); },
        {{2, 4, 13}, {4, 1, 3}, {4}}, seed, opt));
    out.push_back(grad_check_op(
        "conv1d_grouped_same",
        [](const Inputs& in) { return conv1d(in[0], in[1], none(), Conv1dOptions{3, 1, 2, Padding::same}); },
        {{1, 4, 14}, {6, 2, 5}}, seed, opt));
    out.push_back(grad_check_op(
        "conv_transpose1d", [](const Inputs& in) { return conv_transpose1d(in[0], in[1], in[2], 8); },
        {{2, 3, 5}, {3, 2, 16}, {2}}, seed, opt));
    out.push_back(grad_check_op(
        "batch_norm_train",
        [](const Inputs& in) {
            RunningStats<double> stats{Tensor<double>(Array<double>({3}, 0.0)), Tensor<double>(Array<double>({3}, 1.0))};
            return batch_norm(in[0], in[1], in[2], stats, BatchNormOptions{});
        },
        {{2, 3, 7}, {3}, {3}}, seed, opt));
    out.push_back(grad_check_op(
        "batch_norm_eval",
        [](const Inputs& in) {
            RunningStats<double> stats{Tensor<double>(Array<double>({3}, {0.1, -0.2, 0.3})),
                                       Tensor<double>(Array<double>({3}, {0.5, 1.5, 2.0}))};
            BatchNormOptions eval;
            eval.mode = NormMode::eval;
            return batch_norm(in[0], in[1], in[2], stats, eval);
        },
        {{2, 3, 7}, {3}, {3}}, seed, opt));
    out.push_back(grad_check_op("leaky_relu", [](const Inputs& in) { return leaky_relu(in[0], 0.3); }, {{3, 4, 5}}, seed,
                                kinked));
    out.push_back(grad_check_op("sigmoid", [](const Inputs& in) { return sigmoid(in[0]); }, {{3, 4, 5}}, seed, opt));
    out.push_back(grad_check_op("tanh", [](const Inputs& in) { return tanh(in[0]); }, {{3, 4, 5}}, seed, opt));
    const std::size_t H = 3;
    out.push_back(grad_check_op(
        "bilstm",
        [H](const Inputs& in) {
            return bilstm(in[0], LstmWeights<double>{in[1], in[2], in[3]}, LstmWeights<double>{in[4], in[5], in[6]}, H);
        },
        {{2, 4, 2}, {4 * H, 2}, {4 * H, H}, {4 * H}, {4 * H, 2}, {4 * H, H}, {4 * H}}, seed, opt));
    out.push_back(grad_check_op("decimate", [](const Inputs& in) { return decimate(in[0]); }, {{2, 3, 9}}, seed, opt));
    out.push_back(
        grad_check_op("upsample_linear", [](const Inputs& in) { return upsample_linear(in[0]); }, {{2, 3, 6}}, seed, opt));
    out.push_back(
        grad_check_op("swap_last_axes", [](const Inputs& in) { return swap_last_axes(in[0]); }, {{2, 3, 5}}, seed, opt));
    out.push_back(grad_check_op("concat", [](const Inputs& in) { return concat<double>({in[0], in[1]}, 1); },
                                {{2, 2, 5}, {2, 3, 5}}, seed, opt));
    out.push_back(grad_check_op("add", [](const Inputs& in) { return add(in[0], in[1]); }, {{2, 3}, {2, 3}}, seed, opt));
    out.push_back(grad_check_op("sub", [](const Inputs& in) { return sub(in[0], in[1]); }, {{2, 3}, {2, 3}}, seed, opt));
    out.push_back(grad_check_op("mul", [](const Inputs& in) { return mul(in[0], in[1]); }, {{2, 3}, {2, 3}}, seed, opt));
    out.push_back(grad_check_op("scale", [](const Inputs& in) { return scale(in[0], 0.7); }, {{2, 3}}, seed, opt));
    out.push_back(grad_check_op("dense", [](const Inputs& in) { return dense(in[0], in[1], in[2]); },
                                {{2, 3, 4}, {5, 4}, {5}}, seed, opt));
    out.push_back(grad_check_op("sum", [](const Inputs& in) { return sum(in[0]); }, {{2, 3, 4}}, seed, opt));
    out.push_back(grad_check_op("mse", [](const Inputs& in) { return train::mse(in[0], in[1]); }, {{2, 1, 8}, {2, 1, 8}},
                                seed, opt));
    out.push_back(grad_check_op("mae", [](const Inputs& in) { return train::mae(in[0], in[1]); }, {{2, 1, 8}, {2, 1, 8}},
                                seed, opt));
    return out;
}

GradCheckReport end_to_end_check(std::uint64_t seed, std::size_t coords_per_tensor) {
    auto cfg = model::ModelConfig::preset("tiny-htmd");
    cfg.input_length = 256;
    Rng rng(seed);
    model::Separator<double> net(cfg, rng);

    Array<double> x({2, 1, 256});
    for (auto& v : x.values()) v = rng.uniform(-1.0, 1.0);
    Tensor<double> input(x, true);
    Array<double> r_final({2, 1, 256}), r_mid({2, 1, 256});
    for (auto& v : r_final.values()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : r_mid.values()) v = rng.uniform(-1.0, 1.0);

    std::vector<Tensor<double>> wrt{input};
    for (const auto& p : net.parameters().entries())
        if (p.trainable) wrt.push_back(p.tensor);

    GradCheckOptions opt;
    opt.max_coordinates_per_tensor = coords_per_tensor;
    auto loss = [&] {
        auto out = net.forward(input);
        return add(dot_constant(out.final_estimate, r_final), dot_constant(out.intermediate, r_mid));
    };
    return grad_check("htmd_tiny_end_to_end", loss, wrt, seed, opt);
}

}  // namespace suite
