#include "adstage/architectures.hpp"
#include "adstage/cost.hpp"
#include "adstage/errors.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace adstage;
using namespace adstage::testing;

namespace {

struct ConvRow {
    std::uint64_t hw, cin, cout;
};

// both models written out by hand, independent of the builders
const std::vector<ConvRow> kIrConvs{{176, 3, 64}, {88, 64, 128}, {44, 128, 128},
                                    {22, 128, 256}, {11, 256, 256}, {5, 256, 256}};
const std::vector<ConvRow> kDemConvs{{176, 3, 16},    {176, 16, 16},   {88, 16, 32},   {88, 32, 32},
                                     {44, 32, 64},    {44, 64, 64},    {22, 64, 128},  {22, 128, 128},
                                     {11, 128, 256},  {11, 256, 256}};

std::uint64_t conv_params(const std::vector<ConvRow>& rows)
{
    std::uint64_t p = 0;
    for (const auto& r : rows)
        p += 9 * r.cin * r.cout + r.cout;
    return p;
}

} // namespace

TEST(Architectures, IrBrainnetParameterCounts)
{
    const auto g = build_ir_brainnet();
    const auto pc = param_count(g);
    EXPECT_EQ(pc.total, 1801464u);
    EXPECT_EQ(pc.trainable, 1801464u);
    EXPECT_EQ(pc.total, conv_params(kIrConvs) + (1024 * 100 + 100) + (100 * 4 + 4));
    EXPECT_EQ(g.param("conv2/w").size() + g.param("conv2/b").size(), 73856u);
    const auto shapes = g.output_shapes();
    for (std::size_t i = 0; i < g.layers.size(); ++i)
        if (g.layers[i].name == "flatten")
            EXPECT_EQ(shapes[i], (Shape{1024}));
    EXPECT_EQ(memory_bytes(g), 7205856u);
    EXPECT_NEAR(to_mib(memory_bytes(g)), 6.87, 0.005);
}

TEST(Architectures, ModifiedDemnetParameterCounts)
{
    const auto g = build_modified_demnet();
    const auto pc = param_count(g);
    const std::uint64_t bn_channels = 32 + 64 + 128 + 256;
    const std::uint64_t expected = conv_params(kDemConvs) + 4 * bn_channels + (6400 * 100 + 100) + (100 * 4 + 4);
    EXPECT_EQ(pc.total, expected);
    EXPECT_EQ(pc.total, 1821192u);
    EXPECT_EQ(pc.total - pc.trainable, 2 * bn_channels);
    const auto shapes = g.output_shapes();
    for (std::size_t i = 0; i < g.layers.size(); ++i)
        if (g.layers[i].name == "flatten")
            EXPECT_EQ(shapes[i], (Shape{6400}));
    EXPECT_EQ(memory_bytes(g), 7284768u);
    EXPECT_NEAR(to_mib(memory_bytes(g)), 6.95, 0.005);
}

TEST(Architectures, ToyVariantsReuseLayerKinds)
{
    for (const auto& name : model_names()) {
        const auto full = build_model(name);
        const auto toy = build_model(name, ModelScale::toy);
        EXPECT_EQ(toy.input_shape, (Shape{32, 32, 3}));
        EXPECT_EQ(toy.output_shapes().back(), (Shape{kNumClasses}));
        for (const auto& l : toy.layers) {
            bool seen = false;
            for (const auto& f : full.layers)
                seen = seen || f.kind == l.kind;
            EXPECT_TRUE(seen) << name << " " << l.name;
        }
        EXPECT_LT(param_count(toy).total, param_count(full).total / 10);
    }
    EXPECT_THROW(build_model("vgg16"), ConfigError);
}

TEST(Architectures, GraphValidation)
{
    EXPECT_THROW(make_graph("dup", {8, 8, 1},
                            {{LayerKind::conv3x3, 2, "a"}, {LayerKind::conv3x3, 2, "a"}, {LayerKind::flatten, 0, "f"},
                             {LayerKind::dense, 4, "d"}, {LayerKind::softmax, 0, "s"}}),
                 ConfigError);
    EXPECT_THROW(make_graph("nosoftmax", {8, 8, 1}, {{LayerKind::flatten, 0, "f"}, {LayerKind::dense, 4, "d"}}),
                 ConfigError);
    EXPECT_THROW(make_graph("dense-on-image", {8, 8, 1}, {{LayerKind::dense, 4, "d"}, {LayerKind::softmax, 0, "s"}}),
                 ShapeError);
    EXPECT_THROW(make_graph("pool-too-far", {2, 2, 1},
                            {{LayerKind::maxpool2, 0, "p1"}, {LayerKind::maxpool2, 0, "p2"},
                             {LayerKind::flatten, 0, "f"}, {LayerKind::dense, 4, "d"}, {LayerKind::softmax, 0, "s"}}),
                 ShapeError);
}

TEST(Kaiming, StatisticsAndDeterminism)
{
    const auto a = kaiming_init(build_ir_brainnet(), 42);
    const auto b = kaiming_init(build_ir_brainnet(), 42);
    const auto c = kaiming_init(build_ir_brainnet(), 43);
    EXPECT_EQ(a.param("conv4/w"), b.param("conv4/w"));
    EXPECT_NE(a.param("conv4/w"), c.param("conv4/w"));

    const auto& w = a.param("conv4/w"); // fan-in 9*128
    double s = 0, s2 = 0;
    for (float v : w.data()) {
        s += v;
        s2 += double(v) * v;
    }
    const double n = static_cast<double>(w.size());
    const double expected_var = 2.0 / (9.0 * 128.0);
    EXPECT_NEAR(s / n, 0.0, 4.0 * std::sqrt(expected_var / n));
    EXPECT_NEAR(s2 / n / expected_var, 1.0, 0.01);
    for (float v : a.param("conv4/b").data())
        EXPECT_EQ(v, 0.0f);

    const auto& d = a.param("dense1/w"); // fan-in 1024
    double d2 = 0;
    for (float v : d.data())
        d2 += double(v) * v;
    EXPECT_NEAR(d2 / static_cast<double>(d.size()) * 1024.0 / 2.0, 1.0, 0.02);
}

TEST(Kaiming, BatchNormStartsAsIdentity)
{
    const auto g = kaiming_init(build_modified_demnet(ModelScale::toy), 1);
    for (const auto& [k, t] : g.params) {
        const bool ones = k.ends_with("/gamma") || k.ends_with("/moving_var");
        const bool zeros = k.ends_with("/beta") || k.ends_with("/moving_mean");
        for (float v : t.data()) {
            if (ones)
                ASSERT_EQ(v, 1.0f) << k;
            if (zeros)
                ASSERT_EQ(v, 0.0f) << k;
        }
    }
}

TEST(Transfer, ImportsPretrainedConvolution)
{
    const auto g = kaiming_init(build_ir_brainnet(), 1);
    Rng rng(2);
    WeightArchive vgg;
    vgg.add("block2_conv1/w", random_tensor({3, 3, 64, 128}, rng));
    vgg.add("block2_conv1/b", random_tensor({128}, rng));
    vgg.add("block1_conv1/w", random_tensor({3, 3, 3, 64}, rng));
    vgg.add("block1_conv1/b", random_tensor({64}, rng));

    const auto r = import_pretrained_layer(g, "conv2", vgg, "block2_conv1");
    EXPECT_EQ(r.values_copied, 73856u);
    EXPECT_EQ(r.graph.param("conv2/w"), vgg.get("block2_conv1/w"));
    EXPECT_EQ(r.graph.param("conv3/w"), g.param("conv3/w"));
    EXPECT_NE(g.param("conv2/w"), vgg.get("block2_conv1/w")); // input graph untouched

    try {
        import_pretrained_layer(g, "conv2", vgg, "block1_conv1");
        FAIL() << "shape mismatch accepted";
    } catch (const TransferError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(3,3,3,64)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(3,3,64,128)"), std::string::npos) << msg;
    }
    EXPECT_THROW(import_pretrained_layer(g, "conv2", vgg, "block9"), TransferError);
    EXPECT_THROW(import_pretrained_layer(g, "pool1", vgg, "block2_conv1"), TransferError);
}

TEST(Params, ArchiveRoundTripIsAtomic)
{
    auto g = kaiming_init(build_modified_demnet(ModelScale::toy), 5);
    auto archive = params_to_archive(g);
    auto h = kaiming_init(build_modified_demnet(ModelScale::toy), 6);
    load_params(h, archive);
    EXPECT_EQ(h.params, g.params);

    WeightArchive partial;
    for (const auto& e : archive.entries())
        if (e.name != "dense2/b")
            partial.add(e.name, e.tensor);
    auto k = kaiming_init(build_modified_demnet(ModelScale::toy), 7);
    const auto before = k.params;
    EXPECT_THROW(load_params(k, partial), NotFoundError);
    EXPECT_EQ(k.params, before);
}

TEST(Forward, ProbabilitiesAndBatchInvariance)
{
    const auto g = kaiming_init(build_ir_brainnet(ModelScale::toy), 3);
    Rng rng(4);
    const auto x = random_tensor({7, 32, 32, 3}, rng, 0.0, 1.0);
    const auto p = predict(g, x, 32);
    ASSERT_EQ(p.shape(), (Shape{7, 4}));
    for (std::size_t r = 0; r < 7; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c)
            s += p[r * 4 + c];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_LE(max_abs_diff(p, predict(g, x, 3)), 1e-6);
    EXPECT_THROW(predict(g, random_tensor({1, 16, 16, 3}, rng), 4), ShapeError);
}

TEST(Forward, TrainModeUpdatesOnlyBatchNormStatistics)
{
    const auto g = kaiming_init(build_modified_demnet(ModelScale::toy), 3);
    Rng rng(5);
    const auto x = random_tensor({4, 32, 32, 3}, rng, 0.0, 1.0);
    const auto r = forward(g, x, Mode::train);
    EXPECT_EQ(r.bn_states.size(), 3u);
    const auto inf = forward(g, x, Mode::infer);
    EXPECT_TRUE(inf.bn_states.empty() || inf.bn_states.size() == 3u);
    auto h = g;
    apply_batchnorm_states(h, r.bn_states);
    EXPECT_NE(h.param("bn1/moving_mean"), g.param("bn1/moving_mean"));
    EXPECT_EQ(h.param("conv1/w"), g.param("conv1/w"));
}

// ---- cost ---------------------------------------------------------------------------------

TEST(Cost, StandardConventionMatchesHandTable)
{
    std::uint64_t flops = 0;
    std::uint64_t hw_out[] = {88, 44, 22, 11, 5, 2};
    for (std::size_t i = 0; i < kIrConvs.size(); ++i) {
        const auto& r = kIrConvs[i];
        flops += r.hw * r.hw * r.cout * (18 * r.cin + 1); // conv
        flops += r.hw * r.hw * r.cout;                    // relu
        flops += hw_out[i] * hw_out[i] * r.cout * 4;      // pool
    }
    flops += 2 * 1024 * 100 + 100 + 2 * 100 * 4 + 3 * 4;
    const auto rep = flop_count(build_ir_brainnet(), FlopConvention::standard);
    EXPECT_EQ(rep.flops, flops);
    EXPECT_EQ(rep.total_params, 1801464u);
    std::uint64_t sum = 0;
    for (const auto& l : rep.layers)
        sum += l.flops;
    EXPECT_EQ(sum, rep.flops);
}

TEST(Cost, InputResolutionConvention)
{
    std::uint64_t flops = 0;
    for (const auto& r : kIrConvs)
        flops += r.hw * r.hw * r.cin * r.cout * 9 * 2 + r.hw * r.hw * r.cout * 4;
    flops += 2 * 1024 * 100 + 2 * 100 * 4;
    const auto ir = flop_count(build_ir_brainnet(), FlopConvention::input_res);
    EXPECT_EQ(ir.flops, flops);
    const auto md = flop_count(build_modified_demnet(), FlopConvention::input_res);
    const auto ens = ensemble_cost({ir, md});
    EXPECT_EQ(ens.flops, ir.flops + md.flops + 12);
    // reference figure for the two-model ensemble under this convention, in GFLOPs
    EXPECT_NEAR(static_cast<double>(ens.flops) / 1e9, 3.3226, 5e-4);
}

TEST(Cost, MacsCountOnlyMultiplyAccumulates)
{
    std::uint64_t macs = 0;
    for (const auto& r : kIrConvs)
        macs += r.hw * r.hw * r.cout * 9 * r.cin;
    macs += 1024 * 100 + 100 * 4;
    EXPECT_EQ(flop_count(build_ir_brainnet(), FlopConvention::macs).flops, macs);
}

TEST(Cost, EnsembleAveragingAndConventionNames)
{
    EXPECT_EQ(ensemble_average_flops(2, 4), 12u);
    EXPECT_EQ(ensemble_average_flops(3, 4), 16u);
    for (auto c : {FlopConvention::standard, FlopConvention::macs, FlopConvention::input_res})
        EXPECT_EQ(parse_flop_convention(to_string(c)), c);
    EXPECT_THROW(parse_flop_convention("gops"), ConfigError);
    const auto j = to_json(flop_count(build_modified_demnet()));
    EXPECT_EQ(j["total_params"], 1821192);
    EXPECT_EQ(j["memory_bytes"], 7284768);
}
