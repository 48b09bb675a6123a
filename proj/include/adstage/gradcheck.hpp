#pragma once

#include "adstage/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace adstage {

/// A differentiable unit under test: a forward over a list of inputs
/// (activations and parameters alike) and the matching analytic backward that
/// maps an upstream gradient to one gradient per input.
struct GradcheckProblem {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> forward;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor& dy)> backward;
    /// Optional scalar objective evaluated in double (losses). When set it
    /// replaces `forward`; the projection is then a single random weight r and
    /// `backward` receives dy = [r].
    std::function<double(const std::vector<Tensor>&)> loss = {};
};

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    bool passed = false;
};

/// Compares the analytic gradient of L = sum(forward(x) * R), for a fixed
/// random projection R, against central differences with step `step`.
/// The error of one coordinate is |analytic - numeric| / max(1, |numeric|);
/// the maximum over every input element is reported.
/// Throws GradientError if the analytic gradient is not finite.
GradcheckResult gradcheck(const GradcheckProblem& problem, double tolerance, std::uint64_t seed = 0,
                          double step = 1e-3);

} // namespace adstage
