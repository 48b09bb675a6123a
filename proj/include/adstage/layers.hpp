#pragma once

#include "adstage/tensor.hpp"

#include <cstdint>
#include <vector>

// Forward and backward kernels for every layer kind the two networks use.
// Activations are NHWC. Every forward returns the cache its backward needs;
// every function is pure (batch-norm returns its updated moving statistics
// instead of mutating them).

namespace adstage {

enum class Mode { train, infer };
enum class PoolMode { max, avg };

// ---- conv2d: 3x3 kernel, stride 1, zero "same" padding ----------------------

struct Conv2dCache {
    Tensor input;  // [N,H,W,Cin]
    Tensor weight; // [3,3,Cin,Cout]
};
struct Conv2dResult {
    Tensor y;
    Conv2dCache cache;
};
struct Conv2dGrads {
    Tensor dx, dw, db;
};

Conv2dResult conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
Conv2dGrads conv2d_backward(const Conv2dCache& cache, const Tensor& dy);

// ---- pool2d: 2x2 window, stride 2, odd trailing rows/cols dropped -----------

struct PoolCache {
    PoolMode mode = PoolMode::max;
    Shape input_shape;
    std::vector<std::uint32_t> argmax; // flat input offset per output, max mode only
};
struct PoolResult {
    Tensor y;
    PoolCache cache;
};

PoolResult pool2d(const Tensor& x, PoolMode mode);
Tensor pool2d_backward(const PoolCache& cache, const Tensor& dy);

// ---- batch normalization over N,H,W per channel -----------------------------

struct BatchNormConfig {
    double epsilon = 1e-3;
    double momentum = 0.99;
};
struct BatchNormState {
    Tensor moving_mean; // [C]
    Tensor moving_var;  // [C]
};
struct BatchNormCache {
    Mode mode = Mode::infer;
    Tensor xhat;
    Tensor gamma;
    std::vector<double> inv_std;
};
struct BatchNormResult {
    Tensor y;
    BatchNormCache cache;
    BatchNormState state; // updated in train mode, unchanged in infer mode
};
struct BatchNormGrads {
    Tensor dx, dgamma, dbeta;
};

BatchNormResult batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          const BatchNormState& state, Mode mode, const BatchNormConfig& config = {});
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& dy);

// ---- dense: y = x*w + b ------------------------------------------------------

struct DenseCache {
    Tensor input;
    Tensor weight;
};
struct DenseResult {
    Tensor y;
    DenseCache cache;
};
struct DenseGrads {
    Tensor dx, dw, db;
};

DenseResult dense(const Tensor& x, const Tensor& w, const Tensor& b);
DenseGrads dense_backward(const DenseCache& cache, const Tensor& dy);

// ---- relu --------------------------------------------------------------------

struct ReluCache {
    Tensor output;
};
struct ReluResult {
    Tensor y;
    ReluCache cache;
};

ReluResult relu(const Tensor& x);
/// Gradient passes where the input was > 0; zero elsewhere, including at 0.
Tensor relu_backward(const ReluCache& cache, const Tensor& dy);

// ---- softmax / categorical cross-entropy ------------------------------------

/// Row-wise softmax of [N,c] scores, computed with max subtraction.
Tensor softmax(const Tensor& scores);

struct CrossEntropyResult {
    double loss = 0.0; // mean over rows
    Tensor dscores;    // gradient w.r.t. the pre-softmax scores: (probs - onehot) / N
};

/// probs are clamped below at 1e-12 before the log. Throws LabelError when a
/// row of onehot is not a one-hot vector.
CrossEntropyResult cross_entropy(const Tensor& probs, const Tensor& onehot);

// ---- flatten -------------------------------------------------------------------

Tensor flatten(const Tensor& x);
Tensor unflatten(const Tensor& x, const Shape& shape);

} // namespace adstage
