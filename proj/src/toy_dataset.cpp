#include "adstage/toy_dataset.hpp"

#include "adstage/architectures.hpp"
#include "adstage/errors.hpp"
#include "adstage/image_io.hpp"
#include "adstage/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace adstage {

LabeledImageSet make_toy_dataset(const ToyDatasetSpec& spec)
{
    LabeledImageSet set;
    set.class_names = class_names();
    Rng rng(spec.seed);
    const double S = static_cast<double>(spec.size);
    // stripe direction per class
    const std::array<std::pair<double, double>, 4> dirs{
        {{0.0, 1.0}, {1.0, 0.0}, {std::numbers::sqrt2 / 2, std::numbers::sqrt2 / 2}, {std::numbers::sqrt2 / 2, -std::numbers::sqrt2 / 2}}};

    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t k = 0; k < spec.counts[c]; ++k) {
            Tensor img({spec.size, spec.size, 3});
            const double cx = S / 2 + rng.uniform(-3.0, 3.0);
            const double cy = S / 2 + rng.uniform(-3.0, 3.0);
            const double radius = S * rng.uniform(0.34, 0.44);
            const double period = rng.uniform(5.0, 8.0);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            const double brightness = rng.uniform(150.0, 200.0);
            const double contrast = rng.uniform(40.0, 60.0);
            const auto [dx, dy] = dirs[c];
            for (std::size_t i = 0; i < spec.size; ++i) {
                for (std::size_t j = 0; j < spec.size; ++j) {
                    const double y = static_cast<double>(i) + 0.5, x = static_cast<double>(j) + 0.5;
                    const double r = std::hypot(x - cx, y - cy);
                    double v = 30.0;
                    if (r < radius) {
                        const double t = (x * dx + y * dy) * 2.0 * std::numbers::pi / period + phase;
                        v = brightness + contrast * std::sin(t);
                    }
                    v += rng.normal(0.0, 8.0);
                    v = std::clamp(v, 0.0, 255.0);
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        img[(i * spec.size + j) * 3 + ch] = static_cast<float>(std::round(v));
                }
            }
            set.images.push_back(std::move(img));
            set.labels.push_back(c);
            set.provenance.push_back(Provenance::real);
        }
    }
    return set;
}

void write_toy_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec)
{
    const auto set = make_toy_dataset(spec);
    std::vector<std::size_t> seen(set.class_names.size(), 0);
    for (const auto& name : set.class_names)
        std::filesystem::create_directories(root / name);
    for (std::size_t n = 0; n < set.size(); ++n) {
        char file[32];
        std::snprintf(file, sizeof file, "%04zu.ppm", seen[set.labels[n]]++);
        write_ppm(root / set.class_names[set.labels[n]] / file, set.images[n]);
    }
}

} // namespace adstage
