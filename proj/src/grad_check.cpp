#include "htmd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "htmd/errors.hpp"
#include "htmd/ops.hpp"
#include "htmd/rng.hpp"

namespace htmd::diff {

namespace {

double evaluate(const std::function<Tensor<double>()>& loss) {
    NoGradGuard guard;
    const Tensor<double> value = loss();
    const double v = value.value()[0];
    if (!std::isfinite(v)) throw NumericFault("grad_check: non-finite loss");
    return v;
}

std::vector<std::size_t> pick_coordinates(std::size_t n, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (limit == 0 || limit >= n) return idx;
    for (std::size_t i = 0; i < limit; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const std::function<Tensor<double>()>& loss,
                           const std::vector<Tensor<double>>& wrt, std::uint64_t seed,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.op_name = name;
    report.seed = seed;

    std::vector<Tensor<double>> targets = wrt;
    for (auto& t : targets) {
        report.tested_shapes.push_back(t.shape());
        t.zero_grad();
    }
    {
        const Tensor<double> root = loss();
        if (!std::isfinite(root.value()[0])) throw NumericFault("grad_check: non-finite loss");
        backward(root);
    }

    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const double f0 = evaluate(loss);
    for (auto& t : targets) {
        const Array<double> analytic = t.grad();
        if (!analytic.all_finite()) throw NumericFault("grad_check: non-finite analytic gradient in " + name);
        for (std::size_t i : pick_coordinates(t.size(), options.max_coordinates_per_tensor, rng)) {
            double& v = t.value()[i];
            const double original = v;
            const double a = analytic[i];
            bool smooth = false;
            double best = 0.0;
            for (const double h : options.steps) {
                v = original + h;
                const double fp = evaluate(loss);
                v = original - h;
                const double fm = evaluate(loss);
                v = original;

                const double forward_diff = (fp - f0) / h;
                const double backward_diff = (f0 - fm) / h;
                const double scale = std::max({std::abs(forward_diff), std::abs(backward_diff), 1e-6});
                if (std::abs(forward_diff - backward_diff) > options.kink_detection_ratio * scale) continue;
                const double numeric = (fp - fm) / (2.0 * h);
                const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
                const double err = std::abs(a - numeric) / denom;
                best = smooth ? std::min(best, err) : err;
                smooth = true;
            }
            if (!smooth) {
                ++report.kinks_skipped;
                continue;
            }
            report.max_rel_error = std::max(report.max_rel_error, best);
            ++report.coordinates_checked;
        }
    }
    return report;
}

GradCheckReport grad_check_op(const std::string& name,
                              const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& op,
                              const std::vector<Shape>& input_shapes, std::uint64_t seed,
                              const GradCheckOptions& options) {
    Rng rng(seed);
    std::vector<Tensor<double>> inputs;
    for (const auto& shape : input_shapes) {
        Array<double> values(shape);
        for (auto& v : values.values()) {
            do {
                v = rng.uniform(-1.0, 1.0);
            } while (std::abs(v) < options.kink_margin);
        }
        inputs.emplace_back(std::move(values), true);
    }
    Array<double> projection;
    {
        NoGradGuard guard;
        projection = Array<double>(op(inputs).shape());
    }
    for (auto& v : projection.values()) v = rng.uniform(-1.0, 1.0);
    auto loss = [&] { return dot_constant(op(inputs), projection); };
    return grad_check(name, loss, inputs, seed, options);
}

}  // namespace htmd::diff
