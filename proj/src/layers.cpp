#include "adstage/layers.hpp"

#include "adstage/errors.hpp"
#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adstage {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what)
{
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got "
                         + shape_string(t.shape()));
}

// Gathers zero-padded 3x3 patches of one NHWC image into rows of [H*W, 9*C].
void im2col3x3(const float* img, std::size_t H, std::size_t W, std::size_t C, float* cols)
{
    const std::size_t K = 9 * C;
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            float* row = cols + (i * W + j) * K;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    float* dst = row + ((dy + 1) * 3 + (dx + 1)) * C;
                    const long si = static_cast<long>(i) + dy;
                    const long sj = static_cast<long>(j) + dx;
                    if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W)) {
                        std::fill_n(dst, C, 0.0f);
                    } else {
                        std::copy_n(img + (static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)) * C, C, dst);
                    }
                }
            }
        }
    }
}

void col2im3x3(const float* cols, std::size_t H, std::size_t W, std::size_t C, float* img)
{
    const std::size_t K = 9 * C;
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const float* row = cols + (i * W + j) * K;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const long si = static_cast<long>(i) + dy;
                    const long sj = static_cast<long>(j) + dx;
                    if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W))
                        continue;
                    const float* src = row + ((dy + 1) * 3 + (dx + 1)) * C;
                    float* dst = img + (static_cast<std::size_t>(si) * W + static_cast<std::size_t>(sj)) * C;
                    for (std::size_t c = 0; c < C; ++c)
                        dst[c] += src[c];
                }
            }
        }
    }
}

} // namespace

// ---- conv2d ---------------------------------------------------------------------

Conv2dResult conv2d(const Tensor& x, const Tensor& w, const Tensor& b)
{
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    if (w.dim(0) != 3 || w.dim(1) != 3)
        throw ShapeError("conv2d kernel must be 3x3, got " + shape_string(w.shape()));
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
    const std::size_t Cout = w.dim(3);
    if (w.dim(2) != Cin)
        throw ShapeError("conv2d input channels " + std::to_string(Cin) + " do not match kernel "
                         + shape_string(w.shape()));
    if (b.shape() != Shape{Cout})
        throw ShapeError("conv2d bias shape " + shape_string(b.shape()) + " does not match "
                         + std::to_string(Cout) + " output channels");

    Tensor y({N, H, W, Cout});
    const std::size_t HW = H * W, K = 9 * Cin;
    std::vector<float> cols(HW * K);
    for (std::size_t n = 0; n < N; ++n) {
        float* out = y.raw() + n * HW * Cout;
        for (std::size_t p = 0; p < HW; ++p)
            std::copy_n(b.raw(), Cout, out + p * Cout);
        im2col3x3(x.raw() + n * HW * Cin, H, W, Cin, cols.data());
        detail::gemm_nn(HW, Cout, K, cols.data(), w.raw(), out);
    }
    return {std::move(y), Conv2dCache{x, w}};
}

Conv2dGrads conv2d_backward(const Conv2dCache& cache, const Tensor& dy)
{
    const Tensor& x = cache.input;
    const Tensor& w = cache.weight;
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
    const std::size_t Cout = w.dim(3);
    if (dy.shape() != Shape{N, H, W, Cout})
        throw ShapeError("conv2d_backward dy shape " + shape_string(dy.shape()) + " does not match output");

    Tensor dx(x.shape());
    Tensor dw(w.shape());
    Tensor db({Cout});
    const std::size_t HW = H * W, K = 9 * Cin;
    std::vector<float> cols(HW * K);
    std::vector<float> dcols(HW * K);
    for (std::size_t n = 0; n < N; ++n) {
        const float* g = dy.raw() + n * HW * Cout;
        for (std::size_t p = 0; p < HW; ++p)
            for (std::size_t o = 0; o < Cout; ++o)
                db[o] += g[p * Cout + o];
        im2col3x3(x.raw() + n * HW * Cin, H, W, Cin, cols.data());
        detail::gemm_tn(K, Cout, HW, cols.data(), g, dw.raw());
        std::fill(dcols.begin(), dcols.end(), 0.0f);
        detail::gemm_nt(HW, K, Cout, g, w.raw(), dcols.data());
        col2im3x3(dcols.data(), H, W, Cin, dx.raw() + n * HW * Cin);
    }
    return {std::move(dx), std::move(dw), std::move(db)};
}

// ---- pool2d ---------------------------------------------------------------------

PoolResult pool2d(const Tensor& x, PoolMode mode)
{
    require_rank(x, 4, "pool2d input");
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (H < 2 || W < 2)
        throw ShapeError("pool2d needs spatial size >= 2x2, got " + shape_string(x.shape()));
    if (x.size() > std::numeric_limits<std::uint32_t>::max())
        throw ShapeError("pool2d input too large for argmax indexing");
    const std::size_t Ho = H / 2, Wo = W / 2;

    PoolResult r{Tensor({N, Ho, Wo, C}), PoolCache{mode, x.shape(), {}}};
    if (mode == PoolMode::max)
        r.cache.argmax.resize(r.y.size());

    const float* in = x.raw();
    float* out = r.y.raw();
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < Ho; ++i) {
            for (std::size_t j = 0; j < Wo; ++j) {
                const std::size_t base = ((n * H + 2 * i) * W + 2 * j) * C;
                // scan order: (0,0) (0,1) (1,0) (1,1)
                const std::size_t offs[4] = {base, base + C, base + W * C, base + W * C + C};
                for (std::size_t c = 0; c < C; ++c, ++o) {
                    if (mode == PoolMode::max) {
                        std::size_t best = offs[0] + c;
                        for (int k = 1; k < 4; ++k)
                            if (in[offs[k] + c] > in[best])
                                best = offs[k] + c;
                        out[o] = in[best];
                        r.cache.argmax[o] = static_cast<std::uint32_t>(best);
                    } else {
                        out[o] = 0.25f * (in[offs[0] + c] + in[offs[1] + c] + in[offs[2] + c] + in[offs[3] + c]);
                    }
                }
            }
        }
    }
    return r;
}

Tensor pool2d_backward(const PoolCache& cache, const Tensor& dy)
{
    const auto& s = cache.input_shape;
    const std::size_t N = s[0], H = s[1], W = s[2], C = s[3];
    const std::size_t Ho = H / 2, Wo = W / 2;
    if (dy.shape() != Shape{N, Ho, Wo, C})
        throw ShapeError("pool2d_backward dy shape " + shape_string(dy.shape()) + " does not match output");

    Tensor dx(s);
    float* g = dx.raw();
    if (cache.mode == PoolMode::max) {
        for (std::size_t o = 0; o < dy.size(); ++o)
            g[cache.argmax[o]] += dy[o];
        return dx;
    }
    std::size_t o = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                const std::size_t base = ((n * H + 2 * i) * W + 2 * j) * C;
                for (std::size_t c = 0; c < C; ++c, ++o) {
                    const float q = 0.25f * dy[o];
                    g[base + c] += q;
                    g[base + C + c] += q;
                    g[base + W * C + c] += q;
                    g[base + W * C + C + c] += q;
                }
            }
    return dx;
}

// ---- batchnorm ------------------------------------------------------------------

BatchNormResult batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          const BatchNormState& state, Mode mode, const BatchNormConfig& config)
{
    require_rank(x, 4, "batchnorm input");
    const std::size_t C = x.dim(3);
    const Shape cshape{C};
    if (gamma.shape() != cshape || beta.shape() != cshape || state.moving_mean.shape() != cshape
        || state.moving_var.shape() != cshape)
        throw ShapeError("batchnorm parameter shapes must all be (" + std::to_string(C) + ")");
    if (mode == Mode::train && x.dim(0) < 2)
        throw DegenerateBatchError("batchnorm in train mode needs batch size >= 2, got "
                                   + std::to_string(x.dim(0)));

    const std::size_t M = x.size() / C;
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    BatchNormResult r{Tensor(x.shape()), BatchNormCache{mode, Tensor(x.shape()), gamma, std::vector<double>(C)}, state};

    if (mode == Mode::train) {
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t c = 0; c < C; ++c)
                mean[c] += x[m * C + c];
        for (auto& v : mean)
            v /= static_cast<double>(M);
        for (std::size_t m = 0; m < M; ++m)
            for (std::size_t c = 0; c < C; ++c) {
                const double d = x[m * C + c] - mean[c];
                var[c] += d * d;
            }
        for (auto& v : var)
            v /= static_cast<double>(M);
        for (std::size_t c = 0; c < C; ++c) {
            r.state.moving_mean[c] = static_cast<float>(config.momentum * state.moving_mean[c]
                                                        + (1.0 - config.momentum) * mean[c]);
            r.state.moving_var[c] = static_cast<float>(config.momentum * state.moving_var[c]
                                                       + (1.0 - config.momentum) * var[c]);
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = state.moving_mean[c];
            var[c] = state.moving_var[c];
        }
    }

    for (std::size_t c = 0; c < C; ++c)
        r.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + config.epsilon);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t c = 0; c < C; ++c) {
            const double xh = (x[m * C + c] - mean[c]) * r.cache.inv_std[c];
            r.cache.xhat[m * C + c] = static_cast<float>(xh);
            r.y[m * C + c] = static_cast<float>(gamma[c] * xh + beta[c]);
        }
    return r;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& dy)
{
    if (dy.shape() != cache.xhat.shape())
        throw ShapeError("batchnorm_backward dy shape " + shape_string(dy.shape()) + " does not match input");
    const std::size_t C = cache.gamma.size();
    const std::size_t M = dy.size() / C;

    std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t c = 0; c < C; ++c) {
            sum_dy[c] += dy[m * C + c];
            sum_dy_xhat[c] += static_cast<double>(dy[m * C + c]) * cache.xhat[m * C + c];
        }

    BatchNormGrads g{Tensor(dy.shape()), Tensor({C}), Tensor({C})};
    for (std::size_t c = 0; c < C; ++c) {
        g.dgamma[c] = static_cast<float>(sum_dy_xhat[c]);
        g.dbeta[c] = static_cast<float>(sum_dy[c]);
    }
    const double inv_m = 1.0 / static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t c = 0; c < C; ++c) {
            const double scale = cache.gamma[c] * cache.inv_std[c];
            double d = dy[m * C + c];
            if (cache.mode == Mode::train)
                d -= inv_m * (sum_dy[c] + cache.xhat[m * C + c] * sum_dy_xhat[c]);
            g.dx[m * C + c] = static_cast<float>(scale * d);
        }
    return g;
}

// ---- dense ------------------------------------------------------------------------

DenseResult dense(const Tensor& x, const Tensor& w, const Tensor& b)
{
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weight");
    const std::size_t N = x.dim(0), Din = x.dim(1), Dout = w.dim(1);
    if (w.dim(0) != Din)
        throw ShapeError("dense input width " + std::to_string(Din) + " does not match weight "
                         + shape_string(w.shape()));
    if (b.shape() != Shape{Dout})
        throw ShapeError("dense bias shape " + shape_string(b.shape()) + " does not match "
                         + std::to_string(Dout) + " outputs");
    Tensor y({N, Dout});
    for (std::size_t n = 0; n < N; ++n)
        std::copy_n(b.raw(), Dout, y.raw() + n * Dout);
    detail::gemm_nn(N, Dout, Din, x.raw(), w.raw(), y.raw());
    return {std::move(y), DenseCache{x, w}};
}

DenseGrads dense_backward(const DenseCache& cache, const Tensor& dy)
{
    const std::size_t N = cache.input.dim(0), Din = cache.input.dim(1), Dout = cache.weight.dim(1);
    if (dy.shape() != Shape{N, Dout})
        throw ShapeError("dense_backward dy shape " + shape_string(dy.shape()) + " does not match output");
    DenseGrads g{Tensor({N, Din}), Tensor({Din, Dout}), Tensor({Dout})};
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < Dout; ++o)
            g.db[o] += dy[n * Dout + o];
    detail::gemm_tn(Din, Dout, N, cache.input.raw(), dy.raw(), g.dw.raw());
    detail::gemm_nt(N, Din, Dout, dy.raw(), cache.weight.raw(), g.dx.raw());
    return g;
}

// ---- relu -------------------------------------------------------------------------

ReluResult relu(const Tensor& x)
{
    Tensor y = x;
    for (auto& v : y.data())
        v = v > 0.0f ? v : 0.0f;
    ReluCache cache{y};
    return {std::move(y), std::move(cache)};
}

Tensor relu_backward(const ReluCache& cache, const Tensor& dy)
{
    if (dy.shape() != cache.output.shape())
        throw ShapeError("relu_backward dy shape " + shape_string(dy.shape()) + " does not match output");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(cache.output[i] > 0.0f))
            dx[i] = 0.0f;
    return dx;
}

// ---- softmax / cross-entropy -------------------------------------------------------

Tensor softmax(const Tensor& scores)
{
    require_rank(scores, 2, "softmax scores");
    const std::size_t N = scores.dim(0), c = scores.dim(1);
    if (c < 2)
        throw ShapeError("softmax needs at least 2 classes");
    Tensor p(scores.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const float* s = scores.raw() + n * c;
        const double mx = *std::max_element(s, s + c);
        double z = 0.0;
        std::vector<double> e(c);
        for (std::size_t k = 0; k < c; ++k) {
            e[k] = std::exp(static_cast<double>(s[k]) - mx);
            z += e[k];
        }
        for (std::size_t k = 0; k < c; ++k)
            p[n * c + k] = static_cast<float>(e[k] / z);
    }
    return p;
}

CrossEntropyResult cross_entropy(const Tensor& probs, const Tensor& onehot)
{
    require_rank(probs, 2, "cross_entropy probs");
    if (onehot.shape() != probs.shape())
        throw ShapeError("cross_entropy label shape " + shape_string(onehot.shape()) + " does not match "
                         + shape_string(probs.shape()));
    const std::size_t N = probs.dim(0), c = probs.dim(1);
    CrossEntropyResult r{0.0, Tensor(probs.shape())};
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t ones = 0, hot = 0;
        for (std::size_t k = 0; k < c; ++k) {
            const float v = onehot[n * c + k];
            if (v == 1.0f) {
                ++ones;
                hot = k;
            } else if (v != 0.0f) {
                ones = 2;
            }
        }
        if (ones != 1)
            throw LabelError("label row " + std::to_string(n) + " is not one-hot");
        r.loss -= std::log(std::max(static_cast<double>(probs[n * c + hot]), 1e-12));
        for (std::size_t k = 0; k < c; ++k)
            r.dscores[n * c + k] = static_cast<float>((static_cast<double>(probs[n * c + k]) - onehot[n * c + k]) / N);
    }
    r.loss /= static_cast<double>(N);
    return r;
}

// ---- flatten ----------------------------------------------------------------------

Tensor flatten(const Tensor& x)
{
    const std::size_t N = x.dim(0);
    return x.reshaped({N, x.size() / N});
}

Tensor unflatten(const Tensor& x, const Shape& shape) { return x.reshaped(shape); }

} // namespace adstage
