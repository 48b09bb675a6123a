#include "adstage/data_pipeline.hpp"
#include "adstage/errors.hpp"
#include "adstage/image_io.hpp"
#include "adstage/toy_dataset.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

using namespace adstage;
using namespace adstage::testing;

namespace {

std::vector<std::size_t> labels_from_histogram(const std::vector<std::size_t>& hist)
{
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < hist.size(); ++c)
        labels.insert(labels.end(), hist[c], c);
    return labels;
}

std::vector<std::size_t> count(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& rows,
                               std::size_t classes)
{
    std::vector<std::size_t> h(classes, 0);
    for (auto r : rows)
        ++h[labels[r]];
    return h;
}

} // namespace

// ---- images -------------------------------------------------------------------------------

TEST(Resize, AveragesToCentre)
{
    Tensor img({2, 2, 3});
    for (std::size_t c = 0; c < 3; ++c) {
        img.at({0, 1, c}) = 200.0f;
        img.at({1, 1, c}) = 200.0f;
    }
    const auto r = resize_bilinear(img, 1, 1);
    EXPECT_NEAR(r.at({0, 0, 0}), 100.0f, 1e-5);
}

TEST(Resize, ConstantAndIdentity)
{
    Rng rng(1);
    const Tensor flat({5, 7, 3}, 42.0f);
    const auto stretched = resize_bilinear(flat, 11, 3);
    for (float v : stretched.data())
        EXPECT_NEAR(v, 42.0f, 1e-4);
    const auto img = random_tensor({6, 4, 3}, rng, 0.0, 255.0);
    EXPECT_LE(max_abs_diff(resize_bilinear(img, 6, 4), img), 1e-4);
    EXPECT_THROW(resize_bilinear(Tensor({4, 4}), 2, 2), ShapeError);
}

TEST(Resize, HorizontalRampStaysLinearInside)
{
    Tensor img({1, 8, 3});
    for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t c = 0; c < 3; ++c)
            img.at({0, j, c}) = static_cast<float>(10 * j);
    const auto r = resize_bilinear(img, 1, 4); // samples at source x = 0.5, 2.5, 4.5, 6.5
    EXPECT_NEAR(r.at({0, 0, 0}), 5.0f, 1e-4);
    EXPECT_NEAR(r.at({0, 3, 0}), 65.0f, 1e-4);
}

TEST(ImageIo, PpmRoundTripAndAsciiGrey)
{
    const auto dir = scratch_dir("imageio");
    Rng rng(2);
    Tensor img = random_tensor({3, 5, 3}, rng, 0.0, 255.0);
    for (auto& v : img.data())
        v = std::round(v);
    write_ppm(dir / "a.ppm", img);
    EXPECT_EQ(read_image(dir / "a.ppm"), img);

    {
        std::ofstream f(dir / "g.pgm");
        f << "P2\n# comment\n2 1\n15\n0 15\n";
    }
    const auto g = read_image(dir / "g.pgm");
    ASSERT_EQ(g.shape(), (Shape{1, 2, 3}));
    EXPECT_EQ(g.at({0, 1, 2}), 255.0f);
    EXPECT_EQ(g.at({0, 0, 0}), 0.0f);

    {
        std::ofstream f(dir / "bad.ppm");
        f << "P6\n4 4\n255\nxx";
    }
    EXPECT_THROW(read_image(dir / "bad.ppm"), DataError);
    EXPECT_THROW(read_image(dir / "missing.ppm"), IoError);
    EXPECT_TRUE(is_supported_image("x.PPM"));
    EXPECT_FALSE(is_supported_image("x.txt"));
}

// ---- ingestion ----------------------------------------------------------------------------

TEST(Ingest, ReadsClassTreeAndReportsBadFiles)
{
    const auto dir = scratch_dir("ingest");
    ToyDatasetSpec spec;
    spec.counts = {6, 7, 8, 9};
    spec.size = 8;
    write_toy_dataset(dir, spec);
    {
        std::ofstream f(dir / "MOD" / "zz_broken.ppm");
        f << "P6\n8 8\n255\n";
    }
    {
        std::ofstream f(dir / "MOD" / "notes.txt");
        f << "not an image";
    }
    const auto r = ingest_directory(dir);
    EXPECT_EQ(r.set.class_names, (std::vector<std::string>{"MID", "MOD", "ND", "VMD"}));
    EXPECT_EQ(r.set.histogram(), (std::vector<std::size_t>{6, 7, 8, 9}));
    ASSERT_GE(r.failures.size(), 1u);
    bool broken_reported = false;
    for (const auto& f : r.failures)
        broken_reported = broken_reported || f.path.filename() == "zz_broken.ppm";
    EXPECT_TRUE(broken_reported);

    // identical to the in-memory fixture apart from pixel rounding to 8 bits
    const auto mem = make_toy_dataset(spec);
    ASSERT_EQ(mem.size(), r.set.size());
    EXPECT_LE(max_abs_diff(mem.images[3], r.set.images[3]), 0.5);
}

TEST(Ingest, EmptyClassOrMissingRootFails)
{
    const auto dir = scratch_dir("ingest_empty");
    std::filesystem::create_directories(dir / "A");
    std::filesystem::create_directories(dir / "B");
    Tensor img({4, 4, 3}, 7.0f);
    write_ppm(dir / "A" / "0.ppm", img);
    EXPECT_THROW(ingest_directory(dir), IngestionError);
    EXPECT_THROW(ingest_directory(dir / "nope"), IngestionError);
}

TEST(Encode, NormalisesAndOneHots)
{
    LabeledImageSet set;
    set.class_names = {"a", "b"};
    set.images = {Tensor({2, 2, 3}, 255.0f), Tensor({2, 2, 3}, 51.0f)};
    set.labels = {1, 0};
    set.provenance = {Provenance::real, Provenance::real};
    const auto e = normalize_and_encode(set);
    EXPECT_EQ(e.X.shape(), (Shape{2, 2, 2, 3}));
    EXPECT_FLOAT_EQ(e.X[0], 1.0f);
    EXPECT_FLOAT_EQ(e.X[12], 0.2f);
    EXPECT_EQ(e.Y[1], 1.0f);
    EXPECT_EQ(e.Y[2], 1.0f);
    set.images[0][0] = 300.0f;
    EXPECT_THROW(normalize_and_encode(set), DataError);
}

// ---- split --------------------------------------------------------------------------------

TEST(Split, CountsForBothScenarioSizes)
{
    const auto imbalanced = labels_from_histogram({896, 64, 3200, 2240});
    const auto s1 = split_nested(imbalanced, 4, {});
    EXPECT_EQ(s1.train.size(), 4608u);
    EXPECT_EQ(s1.val.size(), 512u);
    EXPECT_EQ(s1.test.size(), 1280u);

    const auto balanced = labels_from_histogram({3200, 3200, 3200, 3200});
    const auto s2 = split_nested(balanced, 4, {});
    EXPECT_EQ(s2.train.size(), 9216u);
    EXPECT_EQ(s2.val.size(), 1024u);
    EXPECT_EQ(s2.test.size(), 2560u);
    EXPECT_EQ(count(balanced, s2.test, 4), (std::vector<std::size_t>{640, 640, 640, 640}));
}

TEST(Split, DisjointCoveringStratifiedDeterministic)
{
    const auto labels = labels_from_histogram({50, 12, 90, 31});
    const auto a = split_nested(labels, 4, {});
    std::set<std::size_t> all;
    for (const auto* part : {&a.train, &a.val, &a.test}) {
        EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
        all.insert(part->begin(), part->end());
    }
    EXPECT_EQ(all.size(), labels.size());
    EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), labels.size());
    EXPECT_EQ(count(labels, a.test, 4), (std::vector<std::size_t>{10, 2, 18, 6}));

    const auto b = split_nested(labels, 4, {});
    EXPECT_EQ(a.test, b.test);
    SplitSpec other;
    other.seed = 7;
    EXPECT_NE(split_nested(labels, 4, other).test, a.test);
}

TEST(Split, FlatFractionsAndErrors)
{
    SplitSpec flat;
    flat.val_of_remainder = false;
    const auto s = split_nested(labels_from_histogram({100, 100}), 2, flat);
    EXPECT_EQ(s.test.size(), 40u);
    EXPECT_EQ(s.val.size(), 20u);
    EXPECT_THROW(split_nested(labels_from_histogram({100, 4}), 2, {}), SplitError);
    SplitSpec bad;
    bad.test_fraction = 1.2;
    EXPECT_THROW(split_nested(labels_from_histogram({10, 10}), 2, bad), SplitError);
}

// ---- SMOTE --------------------------------------------------------------------------------

TEST(Smote, BalancesHistogramAndStaysInParentHull)
{
    const std::vector<std::size_t> hist{896, 64, 3200, 2240};
    const auto labels = labels_from_histogram(hist);
    Rng rng(3);
    const auto X = random_tensor({labels.size(), 6}, rng);
    const auto r = smote(X, labels, 4, {5, 42});

    std::vector<std::size_t> after(4, 0);
    for (auto l : r.labels)
        ++after[l];
    EXPECT_EQ(after, (std::vector<std::size_t>{3200, 3200, 3200, 3200}));
    EXPECT_EQ(r.X.dim(0), 12800u);
    ASSERT_EQ(r.parents.size(), 12800u - labels.size());

    // real rows are untouched and first
    EXPECT_EQ(r.X.slice_rows(0, labels.size()), X);
    for (std::size_t i = 0; i < r.parents.size(); ++i) {
        const std::size_t row = labels.size() + i;
        ASSERT_EQ(r.provenance[row], Provenance::synthetic);
        const auto [a, b] = r.parents[i];
        ASSERT_EQ(labels[a], r.labels[row]);
        ASSERT_EQ(labels[b], r.labels[row]);
        ASSERT_NE(a, b);
        ASSERT_GE(r.weights[i], 0.0);
        ASSERT_LE(r.weights[i], 1.0);
        for (std::size_t d = 0; d < 6; ++d) {
            const float v = r.X[row * 6 + d], pa = X[a * 6 + d], pb = X[b * 6 + d];
            ASSERT_GE(v, std::min(pa, pb));
            ASSERT_LE(v, std::max(pa, pb));
        }
    }
}

TEST(Smote, NeighbourIsAmongKNearest)
{
    const auto labels = labels_from_histogram({40, 10});
    Rng rng(4);
    const auto X = random_tensor({50, 3}, rng);
    const auto r = smote(X, labels, 2, {3, 1});
    for (const auto& [a, b] : r.parents) {
        auto d2 = [&](std::size_t p, std::size_t q) {
            double s = 0;
            for (std::size_t k = 0; k < 3; ++k)
                s += std::pow(double(X[p * 3 + k]) - X[q * 3 + k], 2);
            return s;
        };
        std::size_t closer = 0;
        for (std::size_t q = 40; q < 50; ++q)
            if (q != a && d2(a, q) < d2(a, b))
                ++closer;
        EXPECT_LT(closer, 3u);
    }
}

TEST(Smote, DeterministicAndValidated)
{
    const auto labels = labels_from_histogram({30, 8, 20});
    Rng rng(5);
    const auto X = random_tensor({58, 4}, rng);
    EXPECT_EQ(smote(X, labels, 3, {}).X, smote(X, labels, 3, {}).X);
    EXPECT_NE(smote(X, labels, 3, {5, 1}).X, smote(X, labels, 3, {5, 2}).X);
    EXPECT_THROW(smote(X, labels_from_histogram({30, 5, 23}), 3, {}), SmoteError);
    EXPECT_NO_THROW(smote(X, labels_from_histogram({30, 5, 23}), 3, {4, 42}));
}

// ---- prepare ------------------------------------------------------------------------------

TEST(Prepare, ScenariosOnToyFixture)
{
    const auto set = make_toy_dataset();
    PrepareOptions opt;
    opt.image_size = 32;

    const auto plain = prepare(set, opt);
    EXPECT_EQ(plain.histogram_before, (std::vector<std::size_t>{100, 40, 150, 110}));
    EXPECT_EQ(plain.histogram_after, plain.histogram_before);
    EXPECT_EQ(plain.X.shape(), (Shape{400, 32, 32, 3}));

    opt.apply_smote = true;
    const auto paper = prepare(set, opt);
    EXPECT_EQ(paper.histogram_after, (std::vector<std::size_t>{150, 150, 150, 150}));
    EXPECT_EQ(paper.indices(Subset::test).size(), 120u);

    opt.order = SmoteOrder::after_split;
    const auto after = prepare(set, opt);
    for (auto i : after.indices(Subset::test))
        EXPECT_EQ(after.provenance[i], Provenance::real);
    for (auto i : after.indices(Subset::val))
        EXPECT_EQ(after.provenance[i], Provenance::real);
    EXPECT_EQ(after.indices(Subset::test).size(), plain.indices(Subset::test).size());
}

TEST(Prepare, ArchiveRoundTripIsByteStable)
{
    PrepareOptions opt;
    opt.image_size = 16;
    opt.apply_smote = true;
    const auto a = prepare(make_toy_dataset(), opt);
    const auto b = prepare(make_toy_dataset(), opt);
    EXPECT_EQ(a.to_archive().encode(), b.to_archive().encode());

    const auto back = PreparedData::from_archive(a.to_archive());
    EXPECT_EQ(back.X, a.X);
    EXPECT_EQ(back.labels, a.labels);
    EXPECT_EQ(back.subset, a.subset);
    EXPECT_EQ(back.provenance, a.provenance);
    EXPECT_EQ(back.class_names, a.class_names);
    EXPECT_EQ(back.histogram_before, a.histogram_before);

    WeightArchive junk;
    junk.add("X", Tensor({1}));
    EXPECT_THROW(PreparedData::from_archive(junk), DataError);
}
