#include "adstage/gradcheck.hpp"

#include "adstage/errors.hpp"
#include "adstage/random.hpp"

#include <algorithm>
#include <cmath>

namespace adstage {

namespace {

double project(const Tensor& y, const Tensor& r)
{
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += static_cast<double>(y[i]) * r[i];
    return s;
}

} // namespace

GradcheckResult gradcheck(const GradcheckProblem& problem, double tolerance, std::uint64_t seed, double step)
{
    const bool scalar = static_cast<bool>(problem.loss);
    Rng rng(seed, 0x67726164);
    Tensor proj(scalar ? Shape{1} : problem.forward(problem.inputs).shape());
    for (auto& v : proj.data())
        v = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto objective = [&](const std::vector<Tensor>& in) {
        return scalar ? problem.loss(in) * proj[0] : project(problem.forward(in), proj);
    };

    const std::vector<Tensor> analytic = problem.backward(problem.inputs, proj);
    if (analytic.size() != problem.inputs.size())
        throw GradientError(problem.name + ": backward returned " + std::to_string(analytic.size())
                            + " gradients for " + std::to_string(problem.inputs.size()) + " inputs");

    GradcheckResult result;
    std::vector<Tensor> probe = problem.inputs;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        if (analytic[t].shape() != probe[t].shape())
            throw GradientError(problem.name + ": gradient " + std::to_string(t) + " has shape "
                                + shape_string(analytic[t].shape()) + ", input has "
                                + shape_string(probe[t].shape()));
        if (!analytic[t].all_finite())
            throw GradientError(problem.name + ": analytic gradient " + std::to_string(t) + " is not finite");
        for (std::size_t i = 0; i < probe[t].size(); ++i) {
            const float orig = probe[t][i];
            // divide by the step actually realised in float32, not the nominal one
            const float hi = static_cast<float>(orig + step);
            const float lo = static_cast<float>(orig - step);
            probe[t][i] = hi;
            const double up = objective(probe);
            probe[t][i] = lo;
            const double down = objective(probe);
            probe[t][i] = orig;
            const double numeric = (up - down) / (static_cast<double>(hi) - lo);
            const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_input = t;
                result.worst_index = i;
            }
        }
    }
    result.passed = result.max_relative_error <= tolerance;
    return result;
}

} // namespace adstage
