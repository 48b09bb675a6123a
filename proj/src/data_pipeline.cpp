#include "adstage/data_pipeline.hpp"

#include "adstage/errors.hpp"
#include "adstage/image_io.hpp"
#include "adstage/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace adstage {

namespace fs = std::filesystem;

std::vector<std::size_t> LabeledImageSet::histogram() const
{
    std::vector<std::size_t> h(class_names.size(), 0);
    for (auto l : labels)
        if (l < h.size())
            ++h[l];
    return h;
}

void LabeledImageSet::validate() const
{
    if (images.size() != labels.size() || images.size() != provenance.size())
        throw DataError("image, label and provenance counts differ");
    for (auto l : labels)
        if (l >= class_names.size())
            throw DataError("label " + std::to_string(l) + " out of range for " + std::to_string(class_names.size())
                            + " classes");
}

// ---- ingestion ---------------------------------------------------------------------

IngestResult ingest_directory(const fs::path& root)
{
    std::error_code ec;
    if (!fs::is_directory(root, ec))
        throw IngestionError("dataset root " + root.string() + " is not a directory");

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory())
            class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw IngestionError("dataset root " + root.string() + " has no class directories");

    IngestResult r;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        const std::string cls = class_dirs[c].filename().string();
        r.set.class_names.push_back(cls);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file())
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());

        std::size_t loaded = 0;
        for (const auto& f : files) {
            if (!is_supported_image(f)) {
                r.failures.push_back({f, "unsupported file type"});
                continue;
            }
            try {
                r.set.images.push_back(read_image(f));
                r.set.labels.push_back(c);
                r.set.provenance.push_back(Provenance::real);
                ++loaded;
            } catch (const Error& e) {
                r.failures.push_back({f, e.what()});
            }
        }
        if (loaded == 0)
            throw IngestionError("class directory '" + cls + "' contains no readable images");
    }
    return r;
}

// ---- resize / normalise --------------------------------------------------------------

Tensor resize_bilinear(const Tensor& image, std::size_t out_height, std::size_t out_width)
{
    if (image.rank() != 3)
        throw ShapeError("resize_bilinear expects [H,W,C], got " + shape_string(image.shape()));
    const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
    Tensor out({out_height, out_width, C});

    auto source = [](std::size_t dst, std::size_t in, std::size_t outn) {
        const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
        const double clamped = std::clamp(s, 0.0, static_cast<double>(in - 1));
        const auto lo = static_cast<std::size_t>(std::floor(clamped));
        const auto hi = std::min(lo + 1, in - 1);
        return std::tuple{lo, hi, clamped - static_cast<double>(lo)};
    };

    for (std::size_t i = 0; i < out_height; ++i) {
        const auto [y0, y1, fy] = source(i, H, out_height);
        for (std::size_t j = 0; j < out_width; ++j) {
            const auto [x0, x1, fx] = source(j, W, out_width);
            for (std::size_t c = 0; c < C; ++c) {
                const double a = image[(y0 * W + x0) * C + c];
                const double b = image[(y0 * W + x1) * C + c];
                const double d = image[(y1 * W + x0) * C + c];
                const double e = image[(y1 * W + x1) * C + c];
                const double top = a + fx * (b - a);
                const double bottom = d + fx * (e - d);
                out[(i * out_width + j) * C + c] = static_cast<float>(top + fy * (bottom - top));
            }
        }
    }
    return out;
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes)
{
    Tensor y({labels.size(), classes});
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] >= classes)
            throw LabelError("label " + std::to_string(labels[n]) + " out of range");
        y[n * classes + labels[n]] = 1.0f;
    }
    return y;
}

EncodedSet normalize_and_encode(const LabeledImageSet& set)
{
    set.validate();
    if (set.images.empty())
        throw DataError("cannot encode an empty image set");
    const Shape image_shape = set.images.front().shape();
    const std::size_t per = shape_size(image_shape);
    Shape shape{set.size()};
    shape.insert(shape.end(), image_shape.begin(), image_shape.end());
    Tensor X(shape);
    for (std::size_t n = 0; n < set.size(); ++n) {
        const Tensor& img = set.images[n];
        if (img.shape() != image_shape)
            throw DataError("image " + std::to_string(n) + " has shape " + shape_string(img.shape()) + ", expected "
                            + shape_string(image_shape));
        for (std::size_t i = 0; i < per; ++i) {
            const float v = img[i];
            if (!(v >= 0.0f && v <= 255.0f))
                throw DataError("image " + std::to_string(n) + " has pixel value " + std::to_string(v)
                                + " outside [0,255]");
            X[n * per + i] = v / 255.0f;
        }
    }
    return {std::move(X), one_hot(set.labels, set.class_names.size()), set.labels, set.provenance};
}

// ---- split ------------------------------------------------------------------------

SplitIndices split_nested(const std::vector<std::size_t>& labels, std::size_t classes, const SplitSpec& spec,
                          const std::vector<std::string>& class_names)
{
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(spec.test_fraction) || !in_unit(spec.val_fraction))
        throw SplitError("split fractions must lie in (0,1)");
    if (!spec.val_of_remainder && spec.test_fraction + spec.val_fraction >= 1.0)
        throw SplitError("test and validation fractions leave no training data");

    std::vector<std::vector<std::size_t>> members(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes)
            throw SplitError("label " + std::to_string(labels[i]) + " out of range");
        members[labels[i]].push_back(i);
    }

    SplitIndices out;
    Rng rng(spec.seed, 0x73706c6974);
    for (std::size_t c = 0; c < classes; ++c) {
        auto& idx = members[c];
        const std::string cname = c < class_names.size() ? class_names[c] : std::to_string(c);
        if (idx.size() < 5)
            throw SplitError("class '" + cname + "' has " + std::to_string(idx.size())
                             + " samples; at least 5 are needed to stratify");
        rng.shuffle(std::span<std::size_t>(idx));
        const double n = static_cast<double>(idx.size());
        const auto n_test = static_cast<std::size_t>(std::lround(spec.test_fraction * n));
        const double val_base = spec.val_of_remainder ? n - static_cast<double>(n_test) : n;
        const auto n_val = static_cast<std::size_t>(std::lround(spec.val_fraction * val_base));
        if (n_test + n_val >= idx.size())
            throw SplitError("class '" + cname + "' leaves no training samples");
        out.test.insert(out.test.end(), idx.begin(), idx.begin() + n_test);
        out.val.insert(out.val.end(), idx.begin() + n_test, idx.begin() + n_test + n_val);
        out.train.insert(out.train.end(), idx.begin() + n_test + n_val, idx.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// ---- SMOTE ------------------------------------------------------------------------

namespace {

double squared_distance(const float* a, const float* b, std::size_t d)
{
    // eight independent float lanes, folded into double per chunk
    double total = 0.0;
    std::size_t i = 0;
    constexpr std::size_t chunk = 1024;
    while (i < d) {
        const std::size_t end = std::min(d, i + chunk);
        float acc[8] = {};
        std::size_t k = i;
        for (; k + 8 <= end; k += 8)
            for (int l = 0; l < 8; ++l) {
                const float t = a[k + l] - b[k + l];
                acc[l] += t * t;
            }
        double part = 0.0;
        for (float v : acc)
            part += v;
        for (; k < end; ++k) {
            const double t = static_cast<double>(a[k]) - b[k];
            part += t * t;
        }
        total += part;
        i = end;
    }
    return total;
}

} // namespace

SmoteResult smote(const Tensor& X_flat, const std::vector<std::size_t>& labels, std::size_t classes,
                  const SmoteConfig& config, const std::vector<std::string>& class_names)
{
    if (X_flat.rank() != 2)
        throw ShapeError("smote expects flattened rows [N,D], got " + shape_string(X_flat.shape()));
    if (labels.size() != X_flat.dim(0))
        throw SmoteError("smote label count does not match row count");
    if (config.k_neighbors == 0)
        throw SmoteError("k_neighbors must be positive");

    const std::size_t D = X_flat.dim(1);
    std::vector<std::vector<std::size_t>> members(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes)
            throw SmoteError("label " + std::to_string(labels[i]) + " out of range");
        members[labels[i]].push_back(i);
    }
    std::size_t majority = 0;
    for (const auto& m : members)
        majority = std::max(majority, m.size());

    SmoteResult r;
    r.labels = labels;
    r.provenance.assign(labels.size(), Provenance::real);
    std::vector<float> synthetic;

    Rng rng(config.seed);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto& idx = members[c];
        if (idx.size() >= majority || idx.empty())
            continue;
        const std::string cname = c < class_names.size() ? class_names[c] : std::to_string(c);
        if (idx.size() < config.k_neighbors + 1)
            throw SmoteError("class '" + cname + "' has " + std::to_string(idx.size()) + " samples; k_neighbors="
                             + std::to_string(config.k_neighbors) + " needs at least "
                             + std::to_string(config.k_neighbors + 1) + " (try a smaller k)");

        std::map<std::size_t, std::vector<std::size_t>> knn_cache; // position in idx -> neighbour positions
        auto neighbours = [&](std::size_t pos) -> const std::vector<std::size_t>& {
            auto it = knn_cache.find(pos);
            if (it != knn_cache.end())
                return it->second;
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(idx.size() - 1);
            const float* a = X_flat.raw() + idx[pos] * D;
            for (std::size_t q = 0; q < idx.size(); ++q)
                if (q != pos)
                    dist.emplace_back(squared_distance(a, X_flat.raw() + idx[q] * D, D), q);
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(config.k_neighbors), dist.end());
            std::vector<std::size_t> nn;
            for (std::size_t k = 0; k < config.k_neighbors; ++k)
                nn.push_back(dist[k].second);
            return knn_cache.emplace(pos, std::move(nn)).first->second;
        };

        const std::size_t need = majority - idx.size();
        for (std::size_t s = 0; s < need; ++s) {
            const std::size_t pos = rng.index(idx.size());
            const std::size_t nb = neighbours(pos)[rng.index(config.k_neighbors)];
            const double u = rng.uniform_closed();
            const float* xi = X_flat.raw() + idx[pos] * D;
            const float* xj = X_flat.raw() + idx[nb] * D;
            const std::size_t base = synthetic.size();
            synthetic.resize(base + D);
            // evaluated in double: the float result stays between the parents
            for (std::size_t d = 0; d < D; ++d)
                synthetic[base + d] = static_cast<float>(xi[d] + u * (static_cast<double>(xj[d]) - xi[d]));
            r.labels.push_back(c);
            r.provenance.push_back(Provenance::synthetic);
            r.parents.emplace_back(idx[pos], idx[nb]);
            r.weights.push_back(u);
        }
    }

    std::vector<float> data(X_flat.values());
    data.insert(data.end(), synthetic.begin(), synthetic.end());
    r.X = Tensor({r.labels.size(), D}, std::move(data));
    return r;
}

// ---- prepare ------------------------------------------------------------------------

std::vector<std::size_t> PreparedData::indices(Subset which) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < subset.size(); ++i)
        if (subset[i] == which)
            out.push_back(i);
    return out;
}

namespace {

Tensor to_float_tensor(const std::vector<std::size_t>& v)
{
    std::vector<float> f(v.begin(), v.end());
    return Tensor({v.size()}, std::move(f));
}

template <typename Enum>
Tensor enum_tensor(const std::vector<Enum>& v)
{
    std::vector<float> f;
    f.reserve(v.size());
    for (auto e : v)
        f.push_back(static_cast<float>(static_cast<int>(e)));
    return Tensor({v.size()}, std::move(f));
}

} // namespace

WeightArchive PreparedData::to_archive() const
{
    WeightArchive a;
    a.add("X", X);
    a.add("Y", Y);
    a.add("provenance", enum_tensor(provenance));
    a.add("split", enum_tensor(subset));
    a.metadata()["class_names"] = class_names;
    a.metadata()["histogram_before"] = histogram_before;
    a.metadata()["histogram_after"] = histogram_after;
    a.metadata()["split_codes"] = {{"train", 0}, {"val", 1}, {"test", 2}};
    return a;
}

PreparedData PreparedData::from_archive(const WeightArchive& archive)
{
    PreparedData p;
    try {
        p.X = archive.get("X");
        p.Y = archive.get("Y");
        const auto& prov = archive.get("provenance");
        const auto& split = archive.get("split");
        p.class_names = archive.metadata().at("class_names").get<std::vector<std::string>>();
        p.histogram_before = archive.metadata().value("histogram_before", std::vector<std::size_t>{});
        p.histogram_after = archive.metadata().value("histogram_after", std::vector<std::size_t>{});
        const std::size_t n = p.X.dim(0);
        if (p.Y.rank() != 2 || p.Y.dim(0) != n || p.Y.dim(1) != p.class_names.size() || prov.size() != n
            || split.size() != n)
            throw DataError("prepared archive entries have inconsistent lengths");
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t label = p.class_names.size();
            for (std::size_t c = 0; c < p.class_names.size(); ++c)
                if (p.Y[i * p.class_names.size() + c] == 1.0f)
                    label = c;
            if (label == p.class_names.size())
                throw DataError("prepared archive row " + std::to_string(i) + " has no label");
            p.labels.push_back(label);
            p.provenance.push_back(prov[i] == 0.0f ? Provenance::real : Provenance::synthetic);
            const int code = static_cast<int>(split[i]);
            if (code < 0 || code > 2)
                throw DataError("prepared archive has an invalid split code");
            p.subset.push_back(static_cast<Subset>(code));
        }
    } catch (const NotFoundError& e) {
        throw DataError(std::string("not a prepared dataset archive: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("prepared archive metadata invalid: ") + e.what());
    }
    return p;
}

PreparedData prepare(const LabeledImageSet& set, const PrepareOptions& options)
{
    set.validate();
    const std::size_t classes = set.class_names.size();
    if (classes < 2)
        throw DataError("dataset needs at least two classes, found " + std::to_string(classes));

    LabeledImageSet resized;
    resized.class_names = set.class_names;
    resized.labels = set.labels;
    resized.provenance = set.provenance;
    resized.images.reserve(set.size());
    for (const auto& img : set.images)
        resized.images.push_back(img.dim(0) == options.image_size && img.dim(1) == options.image_size
                                     ? img
                                     : resize_bilinear(img, options.image_size, options.image_size));
    EncodedSet enc = normalize_and_encode(resized);
    resized.images.clear();

    PreparedData p;
    p.class_names = set.class_names;
    p.histogram_before = set.histogram();
    const Shape image_shape{options.image_size, options.image_size, 3};
    const std::size_t per = shape_size(image_shape);

    auto assemble = [&](const Tensor& flat, std::vector<std::size_t> labels, std::vector<Provenance> prov,
                        std::vector<Subset> subset) {
        Shape shape{labels.size()};
        shape.insert(shape.end(), image_shape.begin(), image_shape.end());
        p.X = flat.reshaped(shape);
        p.Y = one_hot(labels, classes);
        p.labels = std::move(labels);
        p.provenance = std::move(prov);
        p.subset = std::move(subset);
    };

    const std::size_t n = enc.labels.size();
    if (!options.apply_smote) {
        const auto split = split_nested(enc.labels, classes, options.split, p.class_names);
        std::vector<Subset> subset(n, Subset::train);
        for (auto i : split.val)
            subset[i] = Subset::val;
        for (auto i : split.test)
            subset[i] = Subset::test;
        assemble(enc.X.reshaped({n, per}), enc.labels, enc.provenance, std::move(subset));
    } else if (options.order == SmoteOrder::paper) {
        auto sm = smote(enc.X.reshaped({n, per}), enc.labels, classes, options.smote, p.class_names);
        const auto split = split_nested(sm.labels, classes, options.split, p.class_names);
        std::vector<Subset> subset(sm.labels.size(), Subset::train);
        for (auto i : split.val)
            subset[i] = Subset::val;
        for (auto i : split.test)
            subset[i] = Subset::test;
        assemble(sm.X, std::move(sm.labels), std::move(sm.provenance), std::move(subset));
    } else {
        const auto split = split_nested(enc.labels, classes, options.split, p.class_names);
        const Tensor flat = enc.X.reshaped({n, per});
        std::vector<std::size_t> train_labels;
        for (auto i : split.train)
            train_labels.push_back(enc.labels[i]);
        auto sm = smote(flat.gather_rows(split.train), train_labels, classes, options.smote, p.class_names);

        std::vector<Tensor> parts{sm.X, flat.gather_rows(split.val), flat.gather_rows(split.test)};
        std::vector<std::size_t> labels = sm.labels;
        std::vector<Provenance> prov = sm.provenance;
        std::vector<Subset> subset(sm.labels.size(), Subset::train);
        for (auto* part : {&split.val, &split.test}) {
            const Subset code = part == &split.val ? Subset::val : Subset::test;
            for (auto i : *part) {
                labels.push_back(enc.labels[i]);
                prov.push_back(enc.provenance[i]);
                subset.push_back(code);
            }
        }
        assemble(concat_rows(parts), std::move(labels), std::move(prov), std::move(subset));
    }
    p.histogram_after.assign(classes, 0);
    for (auto l : p.labels)
        ++p.histogram_after[l];
    return p;
}

} // namespace adstage
