#include "adstage/architectures.hpp"
#include "adstage/checkpoint.hpp"
#include "adstage/data_pipeline.hpp"
#include "adstage/errors.hpp"
#include "adstage/toy_dataset.hpp"
#include "adstage/trainer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

using namespace adstage;
using namespace adstage::testing;

namespace {

struct Data {
    Tensor X, Y;
};

// first `n` toy images in a class-interleaved order
Data toy_rows(std::size_t n, std::uint64_t seed = 7)
{
    ToyDatasetSpec spec;
    spec.seed = seed;
    const auto enc = normalize_and_encode(make_toy_dataset(spec));
    Rng rng(99);
    auto perm = rng.permutation(enc.labels.size());
    perm.resize(n);
    return {enc.X.gather_rows(perm), enc.Y.gather_rows(perm)};
}

bool params_equal(const ModelGraph& a, const ModelGraph& b) { return a.params == b.params; }

} // namespace

// ---- Adam ---------------------------------------------------------------------------------

TEST(Adam, FirstStepClosedForm)
{
    std::map<std::string, Tensor> p{{"w", Tensor({1}, 0.5f)}};
    const std::map<std::string, Tensor> g{{"w", Tensor({1}, 1.0f)}};
    AdamState st;
    TrainConfig cfg;
    adam_step(p, g, st, 1e-4, cfg);
    EXPECT_EQ(st.t, 1u);
    // parameters live in float32; one ulp at 0.5 is 6e-8
    EXPECT_NEAR(p["w"][0], 0.5 - 1e-4 * 1.0 / (1.0 + 1e-7), 6e-8);
}

TEST(Adam, MatchesDoublePrecisionRecurrence)
{
    Rng rng(1);
    std::map<std::string, Tensor> p{{"a", random_tensor({5}, rng)}, {"b", random_tensor({2, 2}, rng)}};
    auto ref = p;
    std::map<std::string, std::vector<double>> m, v, q;
    for (const auto& [k, t] : p) {
        m[k].assign(t.size(), 0.0);
        v[k].assign(t.size(), 0.0);
        q[k].assign(t.values().begin(), t.values().end());
    }
    AdamState st;
    TrainConfig cfg;
    const double lr = 1e-2;
    for (int step = 1; step <= 6; ++step) {
        std::map<std::string, Tensor> g;
        for (const auto& [k, t] : p)
            g[k] = random_tensor(t.shape(), rng);
        adam_step(p, g, st, lr, cfg);
        for (auto& [k, t] : ref) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                const double gi = g[k][i];
                m[k][i] = 0.9 * m[k][i] + 0.1 * gi;
                v[k][i] = 0.999 * v[k][i] + 0.001 * gi * gi;
                const double mh = m[k][i] / (1 - std::pow(0.9, step));
                const double vh = v[k][i] / (1 - std::pow(0.999, step));
                q[k][i] -= lr * mh / (std::sqrt(vh) + 1e-7);
            }
        }
    }
    for (const auto& [k, t] : p)
        for (std::size_t i = 0; i < t.size(); ++i)
            EXPECT_NEAR(t[i], q[k][i], 1e-6) << k << "[" << i << "]";
}

TEST(Adam, ZeroGradientIsNoOp)
{
    Rng rng(2);
    std::map<std::string, Tensor> p{{"w", random_tensor({3, 3}, rng)}};
    const auto before = p;
    const std::map<std::string, Tensor> g{{"w", Tensor({3, 3})}};
    AdamState st;
    for (int i = 0; i < 10; ++i)
        adam_step(p, g, st, 1e-4, TrainConfig{});
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.t, 10u);
}

TEST(Adam, RejectsNonFiniteGradientWithoutMutation)
{
    std::map<std::string, Tensor> p{{"a", Tensor({2}, 1.0f)}, {"b", Tensor({2}, 1.0f)}};
    const auto before = p;
    Tensor bad({2});
    bad[1] = std::numeric_limits<float>::infinity();
    AdamState st;
    try {
        adam_step(p, {{"a", Tensor({2}, 1.0f)}, {"b", bad}}, st, 1e-4, TrainConfig{});
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
    }
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.t, 0u);
    EXPECT_THROW(adam_step(p, {{"a", Tensor({3})}}, st, 1e-4, TrainConfig{}), TrainingError);
}

// ---- plateau ------------------------------------------------------------------------------

TEST(Plateau, Examples)
{
    EXPECT_DOUBLE_EQ(plateau_lr({1.0, 0.9, 0.8}, 1e-4), 1e-4);
    EXPECT_DOUBLE_EQ(plateau_lr({1.0, 1.0, 1.0}, 1e-4), 1e-4);
    EXPECT_NEAR(plateau_lr({1.0, 1.0, 1.0, 1.0}, 1e-4), 1e-5, 1e-18);
    // improvement every second epoch keeps resetting the counter
    EXPECT_DOUBLE_EQ(plateau_lr({1.0, 1.1, 0.9, 1.0, 0.8, 0.9, 0.7, 0.8, 0.6, 0.7}, 1e-4), 1e-4);
}

TEST(Plateau, CounterResetsAfterReductionAndFloorHolds)
{
    PlateauScheduler s(1e-4, 3, 0.1, 1e-10);
    s.observe(1.0);
    for (int i = 0; i < 3; ++i)
        s.observe(2.0);
    EXPECT_EQ(s.reductions(), 1u);
    EXPECT_EQ(s.wait(), 0u);
    s.observe(2.0);
    s.observe(2.0);
    EXPECT_EQ(s.reductions(), 1u);
    for (int i = 0; i < 100; ++i)
        s.observe(5.0);
    EXPECT_GE(s.lr(), 1e-10);
    EXPECT_NEAR(s.lr(), 1e-10, 1e-22);

    const auto copy = PlateauScheduler::from_json(s.to_json());
    EXPECT_EQ(copy.lr(), s.lr());
    EXPECT_EQ(copy.wait(), s.wait());
    EXPECT_EQ(copy.best(), s.best());
}

TEST(TrainConfig, Validation)
{
    TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.plateau_factor = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.plateau_patience = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

// ---- fit ----------------------------------------------------------------------------------

TEST(Fit, PartialBatchIsOneStep)
{
    const auto d = toy_rows(10);
    auto g = kaiming_init(build_ir_brainnet(ModelScale::toy), 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    TrainingState st = TrainingState::fresh(cfg);
    const auto h = fit(g, {d.X, d.Y}, {d.X, d.Y}, cfg, st);
    EXPECT_EQ(h.size(), 1u);
    EXPECT_EQ(st.adam.t, 1u);
    EXPECT_EQ(h[0].steps, 1u);
}

TEST(Fit, TrailingSingletonFoldsIntoPreviousBatchWithBatchNorm)
{
    const auto d = toy_rows(9);
    auto g = kaiming_init(build_modified_demnet(ModelScale::toy), 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    TrainingState st = TrainingState::fresh(cfg);
    EXPECT_NO_THROW(fit(g, {d.X, d.Y}, {d.X, d.Y}, cfg, st));
    EXPECT_EQ(st.adam.t, 1u);

    auto ir = kaiming_init(build_ir_brainnet(ModelScale::toy), 1);
    TrainingState st2 = TrainingState::fresh(cfg);
    fit(ir, {d.X, d.Y}, {d.X, d.Y}, cfg, st2);
    EXPECT_EQ(st2.adam.t, 2u);
}

TEST(Fit, HistoryAndLearningRateInvariants)
{
    const auto d = toy_rows(48);
    auto g = kaiming_init(build_ir_brainnet(ModelScale::toy), 2);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 16;
    cfg.plateau_patience = 1; // provoke reductions
    TrainingState st = TrainingState::fresh(cfg);
    const auto h = fit(g, {d.X, d.Y}, {d.X.slice_rows(0, 8), d.Y.slice_rows(0, 8)}, cfg, st);
    ASSERT_EQ(h.size(), 8u);
    for (std::size_t i = 0; i < h.size(); ++i) {
        EXPECT_EQ(h[i].epoch, i + 1);
        if (i)
            EXPECT_LE(h[i].learning_rate, h[i - 1].learning_rate);
    }
    const double r = static_cast<double>(st.scheduler.reductions());
    EXPECT_NEAR(st.scheduler.lr(), 1e-4 * std::pow(10.0, -r), 1e-4 * std::pow(10.0, -r) * 1e-9);
    const auto csv = history_csv(h);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,val_loss,val_acc,lr");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
}

TEST(Fit, BitReproducible)
{
    const auto d = toy_rows(40);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    auto a = kaiming_init(build_modified_demnet(ModelScale::toy), 3);
    auto b = a;
    const auto ha = fit(a, {d.X, d.Y}, {d.X, d.Y}, cfg);
    const auto hb = fit(b, {d.X, d.Y}, {d.X, d.Y}, cfg);
    EXPECT_TRUE(params_equal(a, b));
    for (std::size_t i = 0; i < ha.size(); ++i)
        EXPECT_EQ(ha[i].train_loss, hb[i].train_loss);
}

TEST(Fit, RepeatedBatchLossDecreases)
{
    const auto d = toy_rows(16);
    for (const auto& name : model_names()) {
        auto g = kaiming_init(build_model(name, ModelScale::toy), 4);
        AdamState st;
        TrainConfig cfg;
        double prev = std::numeric_limits<double>::infinity();
        for (int step = 0; step < 25; ++step) {
            auto bg = compute_gradients(g, d.X, d.Y);
            EXPECT_LE(bg.loss, prev + 1e-6) << name << " step " << step;
            prev = bg.loss;
            adam_step(g.params, bg.grads, st, cfg.learning_rate, cfg);
        }
    }
}

TEST(Fit, NonFiniteStepAbortsWithLocation)
{
    auto d = toy_rows(8);
    d.X[5] = std::numeric_limits<float>::quiet_NaN();
    auto g = kaiming_init(build_ir_brainnet(ModelScale::toy), 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    try {
        fit(g, {d.X, d.Y}, {d.X, d.Y}, cfg);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

// ---- checkpoints --------------------------------------------------------------------------

TEST(Checkpoint, RoundTripGivesBitIdenticalForward)
{
    const auto dir = scratch_dir("ckpt_roundtrip");
    const auto d = toy_rows(24);
    auto g = kaiming_init(build_modified_demnet(ModelScale::toy), 6);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    TrainingState st = TrainingState::fresh(cfg);
    fit(g, {d.X, d.Y}, {d.X, d.Y}, cfg, st);
    save_checkpoint(dir / "m.ckpt", g, st);

    auto h = build_modified_demnet(ModelScale::toy);
    TrainingState st2;
    load_checkpoint(dir / "m.ckpt", h, st2);
    EXPECT_EQ(predict(h, d.X), predict(g, d.X));
    EXPECT_EQ(st2.adam.t, st.adam.t);
    EXPECT_EQ(st2.epochs_done, 1u);
    EXPECT_EQ(read_checkpoint_metadata(dir / "m.ckpt")["model"], "modified-demnet-toy");
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun)
{
    const auto dir = scratch_dir("ckpt_resume");
    const auto d = toy_rows(40);
    const auto v = toy_rows(12, 8);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.plateau_patience = 1;
    const auto init = kaiming_init(build_modified_demnet(ModelScale::toy), 7);

    auto full = init;
    TrainingState sf = TrainingState::fresh(cfg);
    fit(full, {d.X, d.Y}, {v.X, v.Y}, cfg, sf);

    auto part = init;
    TrainConfig half = cfg;
    half.epochs = 2;
    TrainingState sp = TrainingState::fresh(half);
    fit(part, {d.X, d.Y}, {v.X, v.Y}, half, sp);
    save_checkpoint(dir / "half.ckpt", part, sp);

    auto resumed = build_modified_demnet(ModelScale::toy);
    TrainingState sr;
    load_checkpoint(dir / "half.ckpt", resumed, sr);
    fit(resumed, {d.X, d.Y}, {v.X, v.Y}, cfg, sr);

    ASSERT_EQ(sr.history.size(), sf.history.size());
    for (std::size_t i = 0; i < sf.history.size(); ++i) {
        EXPECT_EQ(sr.history[i].train_loss, sf.history[i].train_loss) << "epoch " << i + 1;
        EXPECT_EQ(sr.history[i].val_loss, sf.history[i].val_loss) << "epoch " << i + 1;
        EXPECT_EQ(sr.history[i].learning_rate, sf.history[i].learning_rate) << "epoch " << i + 1;
    }
    EXPECT_TRUE(params_equal(resumed, full));
}

TEST(Checkpoint, CorruptOrMismatchedFilesLeaveStateUntouched)
{
    const auto dir = scratch_dir("ckpt_bad");
    auto g = kaiming_init(build_ir_brainnet(ModelScale::toy), 8);
    TrainingState st = TrainingState::fresh(TrainConfig{});
    save_checkpoint(dir / "ir.ckpt", g, st);

    std::ifstream in(dir / "ir.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    {
        std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<long>(bytes.size() - 100));
    }

    auto target = kaiming_init(build_ir_brainnet(ModelScale::toy), 9);
    const auto before = target.params;
    TrainingState ts = TrainingState::fresh(TrainConfig{});
    ts.epochs_done = 17;
    EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt", target, ts), CheckpointError);
    EXPECT_THROW(load_checkpoint(dir / "missing.ckpt", target, ts), CheckpointError);
    auto other = build_modified_demnet(ModelScale::toy);
    EXPECT_THROW(load_checkpoint(dir / "ir.ckpt", other, ts), CheckpointError);
    EXPECT_EQ(target.params, before);
    EXPECT_EQ(ts.epochs_done, 17u);
}
