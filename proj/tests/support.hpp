#pragma once

// Random fixtures and brute-force reference implementations shared by the
// unit and acceptance tests. Everything here is deliberately naive.

#include "adstage/random.hpp"
#include "adstage/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace adstage::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data())
        v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

inline Tensor random_probs(std::size_t rows, std::size_t classes, Rng& rng)
{
    Tensor t({rows, classes});
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        std::vector<double> raw(classes);
        for (auto& v : raw) {
            v = rng.uniform() + 1e-3;
            sum += v;
        }
        for (std::size_t c = 0; c < classes; ++c)
            t[r * classes + c] = static_cast<float>(raw[c] / sum);
    }
    return t;
}

// zero-padded 3x3 "same" convolution, one output element at a time
inline Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b)
{
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3), K = w.dim(3);
    Tensor y({N, H, W, K});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = b[k];
                    for (int di = -1; di <= 1; ++di)
                        for (int dj = -1; dj <= 1; ++dj) {
                            const long si = static_cast<long>(i) + di, sj = static_cast<long>(j) + dj;
                            if (si < 0 || sj < 0 || si >= static_cast<long>(H) || sj >= static_cast<long>(W))
                                continue;
                            for (std::size_t c = 0; c < C; ++c)
                                acc += static_cast<double>(x.at({n, std::size_t(si), std::size_t(sj), c}))
                                       * w.at({std::size_t(di + 1), std::size_t(dj + 1), c, k});
                        }
                    y.at({n, i, j, k}) = static_cast<float>(acc);
                }
    return y;
}

inline Tensor pool_oracle(const Tensor& x, bool max_mode)
{
    const std::size_t N = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2, C = x.dim(3);
    Tensor y({N, H, W, C});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t c = 0; c < C; ++c) {
                    const float a = x.at({n, 2 * i, 2 * j, c}), b = x.at({n, 2 * i, 2 * j + 1, c});
                    const float d = x.at({n, 2 * i + 1, 2 * j, c}), e = x.at({n, 2 * i + 1, 2 * j + 1, c});
                    y.at({n, i, j, c}) = max_mode ? std::max({a, b, d, e})
                                                  : static_cast<float>((double(a) + b + d + e) / 4.0);
                }
    return y;
}

inline Tensor dense_oracle(const Tensor& x, const Tensor& w, const Tensor& b)
{
    const std::size_t N = x.dim(0), D = x.dim(1), U = w.dim(1);
    Tensor y({N, U});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t u = 0; u < U; ++u) {
            double acc = b[u];
            for (std::size_t d = 0; d < D; ++d)
                acc += static_cast<double>(x[n * D + d]) * w[d * U + u];
            y[n * U + u] = static_cast<float>(acc);
        }
    return y;
}

// fresh empty directory under the system temp dir
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("adstage_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace adstage::testing
