#include "otfsim/nn/autoencoder.hpp"
#include "otfsim/nn/checkpoint.hpp"
#include "otfsim/nn/gradcheck.hpp"
#include "otfsim/nn/layers.hpp"
#include "otfsim/nn/training.hpp"
#include "otfsim/ntn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace otfsim;
using namespace otfsim::nn;

namespace {

AEConfig small_config(Head head = Head::hd_linear, int bands = 2)
{
    AEConfig c;
    c.m = 8;
    c.n = 8;
    c.bands = bands;
    c.enc_widths = {12, 10};
    c.dec_widths = {14, 12, 10};
    c.head = head;
    return c;
}

im::IMConfig data_config(int m, int n, int null_count = 1)
{
    im::IMConfig c;
    c.group_size = 4;
    c.groups = m * n / 4;
    c.null_count = null_count;
    c.constellation_order = 4;
    return c;
}

otfs::PathSet random_paths(Rng& rng)
{
    ntn::PathRecipe r;
    r.path_count = 4;
    r.tau_max_s = 2.5e-6;
    r.doppler_hz = 15e3;
    const ntn::GridTiming grid{8, 8, 90e3};
    return ntn::gen_paths(r, ntn::ShadowedRicianParams{}, grid, rng);
}

struct Fixture {
    Batch batch;
    LinkMatrices link;
    CMat noise;
};

Fixture make_fixture(const AEConfig& cfg, int batch, std::uint64_t seed, double snr_db = 10.0)
{
    Fixture f;
    const Dataset ds = make_dataset(data_config(cfg.m, cfg.n), cfg.m, cfg.n, batch, seed);
    f.batch = ds.slice(0, batch);
    Rng rng(seed);
    const auto ld = draw_link(random_paths, otfs::modulation_matrix(cfg.m, cfg.n), cfg.m, cfg.n, batch, snr_db, 0.0, rng);
    f.link = ld.link;
    f.noise = ld.noise;
    return f;
}

RMat randn(Eigen::Index r, Eigen::Index c, Rng& rng)
{
    std::normal_distribution<double> nd;
    RMat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

} // namespace

TEST(BatchNorm, StandardNormalPassesThroughDistributionally)
{
    Rng rng(1);
    BatchNorm bn(5);
    const RMat x = randn(5, 20000, rng);
    const RMat y = bn.forward(x, Mode::train);
    for (int i = 0; i < 5; ++i) {
        const double mean = y.row(i).mean();
        const double var = (y.row(i).array() - mean).square().mean();
        EXPECT_LT(std::abs(mean), 0.05);
        EXPECT_GT(var, 0.9);
        EXPECT_LT(var, 1.1);
    }
}

TEST(BatchNorm, ConstantFeatureMapsToShift)
{
    BatchNorm bn(2);
    bn.beta.value << 0.25, -3.0;
    RMat x(2, 6);
    x.row(0).setConstant(4.0);
    x.row(1).setConstant(-7.5);
    const RMat y = bn.forward(x, Mode::train);
    EXPECT_TRUE((y.row(0).array() == 0.25).all());
    EXPECT_TRUE((y.row(1).array() == -3.0).all());
}

TEST(BatchNorm, TrainModeRejectsSingleSample)
{
    BatchNorm bn(3);
    EXPECT_THROW(bn.forward(RMat::Ones(3, 1), Mode::train), ConfigError);
}

TEST(BatchNorm, EvalModeIsDeterministicOnOneSample)
{
    BatchNorm bn(3);
    bn.running_mean << 1.0, 2.0, 3.0;
    bn.running_var << 4.0, 1.0, 0.25;
    const RMat x = RMat::Constant(3, 1, 2.0);
    const RMat a = bn.forward(x, Mode::eval);
    EXPECT_TRUE(a.isApprox(bn.forward(x, Mode::eval), 0.0));
    EXPECT_NEAR(a(0), 0.5, 1e-5);
    EXPECT_NEAR(a(2), -2.0, 1e-4);
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance)
{
    BatchNorm bn(1);
    RMat x(1, 4);
    x << 1.0, 2.0, 3.0, 4.0;
    BatchNorm::Cache c;
    bn.forward(x, Mode::train, &c);
    bn.update_running(c, 4);
    EXPECT_NEAR(bn.running_mean(0), 0.25, 1e-15);
    EXPECT_NEAR(bn.running_var(0), 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
}

TEST(Softmax, ConstantLogitsGiveUniformRows)
{
    const RMat p = softmax_slots(RMat::Constant(12, 3, 0.7), 4);
    EXPECT_TRUE(p.isApprox(RMat::Constant(12, 3, 0.25), 1e-15));
}

TEST(Softmax, RowsSumToOne)
{
    Rng rng(2);
    const RMat p = softmax_slots(randn(64, 10, rng) * 30.0, 16);
    for (Eigen::Index c = 0; c < p.cols(); ++c)
        for (int s = 0; s < 4; ++s) {
            EXPECT_NEAR(p.col(c).segment(s * 16, 16).sum(), 1.0, 1e-12);
            EXPECT_TRUE((p.col(c).segment(s * 16, 16).array() >= 0.0).all());
        }
}

TEST(Linear, DoublingWeightsDoublesOutputWithZeroBias)
{
    Rng rng(3);
    Linear l(6, 4, rng);
    const RMat x = randn(6, 5, rng);
    const RMat y = l.forward(x);
    l.w.value *= 2.0;
    EXPECT_TRUE(l.forward(x).isApprox(2.0 * y, 1e-14));
}

TEST(Losses, Reconstruction)
{
    Rng rng(4);
    const RMat x = randn(8, 3, rng);
    EXPECT_EQ(loss_reconstruction(x, x), 0.0);
    RMat d = randn(8, 1, rng);
    d /= d.norm();
    EXPECT_NEAR(loss_reconstruction(x.col(0), x.col(0) + d), 1.0, 1e-14);
    const RMat y = randn(8, 3, rng);
    double oracle = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i) oracle += (x(i, c) - y(i, c)) * (x(i, c) - y(i, c));
    EXPECT_NEAR(loss_reconstruction(x, y), oracle / 3.0, 1e-12);
}

TEST(Losses, PaprValues)
{
    CMat s(16, 2);
    for (int i = 0; i < 16; ++i) s(i, 0) = std::polar(2.0, 0.3 * i);
    s.col(1).setZero();
    s(5, 1) = Complex(0.0, 3.0);
    CMat one = s.col(0);
    EXPECT_NEAR(loss_papr(one), 1.0, 1e-12);
    CMat imp = s.col(1);
    EXPECT_NEAR(loss_papr(imp), 16.0, 1e-12);
    EXPECT_THROW(loss_papr(CMat::Zero(4, 1)), NumericalError);
}

TEST(Losses, PaprGradientMatchesFiniteDifferences)
{
    Rng rng(5);
    CMat s(32, 3);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = complex_normal(rng, 1.0);
    CMat g;
    loss_papr(s, &g, 0.7);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        for (int part = 0; part < 2; ++part) {
            const Complex dir = part == 0 ? Complex(1.0, 0.0) : Complex(0.0, 1.0);
            const double h = 1e-6;
            CMat sp = s;
            CMat sm = s;
            sp.data()[i] += h * dir;
            sm.data()[i] -= h * dir;
            const double num = 0.7 * (loss_papr(sp) - loss_papr(sm)) / (2.0 * h);
            const double ana = part == 0 ? g.data()[i].real() : g.data()[i].imag();
            worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
        }
    EXPECT_LT(worst, 1e-4);
}

TEST(Losses, TotalLoss)
{
    EXPECT_EQ(total_loss(1.5, 9.0, 0.0), 1.5);
    EXPECT_NEAR(total_loss(2.0, 3.0, 0.1), 2.3, 1e-15);
    EXPECT_THROW(total_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST(Losses, CrossEntropy)
{
    Eigen::MatrixXi labels(3, 2);
    labels << 0, 3, 2, -1, 1, 1;
    RMat onehot = RMat::Zero(12, 2);
    for (int c = 0; c < 2; ++c)
        for (int s = 0; s < 3; ++s)
            if (labels(s, c) >= 0) onehot(s * 4 + labels(s, c), c) = 1.0;
    const auto perfect = loss_cross_entropy(onehot, labels, 4);
    EXPECT_EQ(perfect.value, 0.0);
    EXPECT_FALSE(perfect.clamped);

    const auto uniform = loss_cross_entropy(RMat::Constant(12, 2, 0.25), labels, 4);
    EXPECT_NEAR(uniform.value, 5.0 * std::log(4.0) / 2.0, 1e-14);

    Rng rng(6);
    const RMat p = softmax_slots(randn(12, 2, rng), 4);
    double oracle = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int s = 0; s < 3; ++s)
            if (labels(s, c) >= 0) oracle -= std::log(p(s * 4 + labels(s, c), c));
    EXPECT_NEAR(loss_cross_entropy(p, labels, 4).value, oracle / 2.0, 1e-12);

    RMat wrong = onehot;
    wrong.col(0).segment(0, 4) << 0.0, 1.0, 0.0, 0.0;
    const auto clamped = loss_cross_entropy(wrong, labels, 4);
    EXPECT_TRUE(clamped.clamped);
    EXPECT_NEAR(clamped.value, -std::log(kProbFloor) / 2.0, 1e-9);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged)
{
    Param p(RMat::Constant(3, 2, 0.4));
    AdamState st;
    for (int i = 0; i < 5; ++i) adam_step({&p}, st, AdamConfig{});
    EXPECT_TRUE((p.value.array() == 0.4).all());
}

TEST(Adam, FirstStepIsSignedLearningRate)
{
    Param p(RMat::Zero(1, 3));
    p.grad << 0.3, -2.0, 1e-3;
    AdamState st;
    const AdamConfig cfg{1e-3};
    adam_step({&p}, st, cfg);
    for (int i = 0; i < 3; ++i) {
        const double g = p.grad(0, i);
        EXPECT_NEAR(p.value(0, i), -cfg.lr * g / (std::abs(g) + cfg.eps), 1e-15);
    }
}

TEST(Adam, ConstantGradientSteadyStateStepIsLearningRate)
{
    Param p(RMat::Zero(1, 1));
    AdamState st;
    const AdamConfig cfg{1e-2};
    double prev = 0.0;
    double step = 0.0;
    for (int t = 0; t < 2000; ++t) {
        p.grad(0, 0) = 0.37;
        adam_step({&p}, st, cfg);
        step = prev - p.value(0, 0);
        prev = p.value(0, 0);
    }
    EXPECT_NEAR(step, cfg.lr, 1e-9);
}

TEST(Adam, NonFiniteGradientAborts)
{
    Param p(RMat::Zero(2, 1));
    p.grad(1, 0) = std::nan("");
    AdamState st;
    EXPECT_THROW(adam_step({&p}, st, AdamConfig{}), NumericalError);
    EXPECT_TRUE((p.value.array() == 0.0).all());
}

TEST(Encoder, OutputHasUnitMeanPower)
{
    const AEConfig cfg = small_config();
    MultiBandAE ae(cfg, 7);
    Rng rng(8);
    for (int trial = 0; trial < 1000; trial += 100) {
        const RMat x = randn(cfg.band_dim(), 100, rng);
        for (Mode mode : {Mode::train, Mode::eval}) {
            const CMat u = encoder_forward(ae.encoder(0), x, mode, NormMode::per_sample);
            for (Eigen::Index c = 0; c < u.cols(); ++c) EXPECT_NEAR(u.col(c).squaredNorm() / u.rows(), 1.0, 1e-9);
        }
        const CMat ub = encoder_forward(ae.encoder(0), x, Mode::train, NormMode::per_batch);
        EXPECT_NEAR(ub.squaredNorm() / static_cast<double>(ub.size()), 1.0, 1e-9);
    }
}

TEST(Encoder, ZeroOutputIsDegenerate)
{
    MultiBandAE ae(small_config(), 9);
    auto& e = ae.encoder(0);
    for (Linear* l : {&e.fc1, &e.fc2, &e.fc3}) {
        l->w.value.setZero();
        l->b.value.setZero();
    }
    Rng rng(10);
    EXPECT_THROW(encoder_forward(e, randn(ae.config().band_dim(), 4, rng), Mode::train, NormMode::per_sample), NumericalError);
}

TEST(Encoder, EvalModeIsDeterministic)
{
    MultiBandAE ae(small_config(), 11);
    Rng rng(12);
    const RMat x = randn(ae.config().band_dim(), 1, rng);
    RMat two(x.rows(), 2);
    two << x, x;
    const CMat u = encoder_forward(ae.encoder(1), two, Mode::eval, NormMode::per_sample);
    EXPECT_TRUE(u.col(0) == u.col(1));
}

TEST(MultiBandAE, DefaultWidthsFollowBandDimension)
{
    AEConfig c;
    c.m = 8;
    c.n = 8;
    c.bands = 2;
    MultiBandAE ae(c, 1);
    EXPECT_EQ(ae.encoder(0).fc1.out_dim(), 256);
    EXPECT_EQ(ae.encoder(0).fc3.out_dim(), 64);
    EXPECT_EQ(ae.decoder(0).fc1.in_dim(), 96);
    EXPECT_EQ(ae.decoder(0).fc1.out_dim(), 384);
    EXPECT_EQ(ae.decoder(0).fc3.out_dim(), 256);
    EXPECT_EQ(ae.decoder(0).out.out_dim(), 64);
    c.head = Head::sd_softmax;
    EXPECT_EQ(MultiBandAE(c, 1).decoder(1).out.out_dim(), 32 * 4);
}

TEST(MultiBandAE, SharedWeightsUseOneCopy)
{
    AEConfig c = small_config();
    c.shared_weights = true;
    MultiBandAE ae(c, 1);
    EXPECT_EQ(ae.encoders().size(), 1u);
    EXPECT_EQ(&ae.encoder(0), &ae.encoder(1));
    EXPECT_EQ(MultiBandAE(small_config(), 1).encoders().size(), 2u);
}

TEST(MultiBandAE, RejectsBadConfig)
{
    AEConfig c = small_config();
    c.bands = 3;
    EXPECT_THROW(MultiBandAE(c, 1), ConfigError);
    c = small_config();
    c.eta = -1.0;
    EXPECT_THROW(MultiBandAE(c, 1), ConfigError);
}

TEST(EndToEnd, HardDecisionGradientMatchesFiniteDifferences)
{
    AEConfig cfg = small_config(Head::hd_linear);
    cfg.eta = 0.01;
    MultiBandAE ae(cfg, 21);
    Fixture f = make_fixture(cfg, 8, 22);
    const auto r = gradient_check(ae, f.batch, f.link, f.noise, cfg.eta);
    for (const auto& t : r.tensors) EXPECT_LT(t.max_rel_error, 1e-4) << t.name;
}

TEST(EndToEnd, SoftDecisionGradientMatchesFiniteDifferences)
{
    const AEConfig cfg = small_config(Head::sd_softmax);
    MultiBandAE ae(cfg, 23);
    Fixture f = make_fixture(cfg, 8, 24);
    const auto r = gradient_check(ae, f.batch, f.link, f.noise, 0.0);
    for (const auto& t : r.tensors) EXPECT_LT(t.max_rel_error, 1e-4) << t.name;
}

TEST(EndToEnd, PerBatchNormalisationGradient)
{
    AEConfig cfg = small_config(Head::hd_linear, 1);
    cfg.norm = NormMode::per_batch;
    cfg.eta = 0.1;
    MultiBandAE ae(cfg, 25);
    Fixture f = make_fixture(cfg, 6, 26);
    EXPECT_LT(gradient_check(ae, f.batch, f.link, f.noise, cfg.eta).max_rel_error(), 1e-4);
}

TEST(EndToEnd, SingleBandUsesWholeGrid)
{
    const AEConfig cfg = small_config(Head::hd_linear, 1);
    MultiBandAE ae(cfg, 27);
    EXPECT_EQ(ae.encoder(0).fc1.in_dim(), 128);
    Fixture f = make_fixture(cfg, 4, 28);
    EXPECT_TRUE(band_rows(f.batch.x, 0, 1) == f.batch.x);
    const auto r = infer(ae, f.batch, f.link, f.noise);
    EXPECT_EQ(r.x_hat.rows(), 64);
    EXPECT_TRUE(r.x_hat.allFinite());
}

TEST(EndToEnd, SoftDecisionProbabilitiesAreRowStochastic)
{
    const AEConfig cfg = small_config(Head::sd_softmax);
    MultiBandAE ae(cfg, 29);
    Fixture f = make_fixture(cfg, 4, 30);
    const auto r = infer(ae, f.batch, f.link, f.noise);
    ASSERT_EQ(r.probs.rows(), 64 * 4);
    for (Eigen::Index c = 0; c < r.probs.cols(); ++c)
        for (int s = 0; s < 64; ++s) EXPECT_NEAR(r.probs.col(c).segment(s * 4, 4).sum(), 1.0, 1e-12);
}

TEST(Dataset, LabelsMatchSymbols)
{
    const auto ds = make_dataset(data_config(8, 8), 8, 8, 20, 31);
    const im::Qam qam(4);
    for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
        int nulls = 0;
        for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
            if (ds.labels(i, c) < 0) {
                EXPECT_EQ(ds.x(i, c), Complex(0.0, 0.0));
                ++nulls;
            } else {
                EXPECT_EQ(ds.x(i, c), qam.point(ds.labels(i, c)));
            }
        }
        EXPECT_EQ(nulls, 16);
    }
}

TEST(Training, ZeroIterationsKeepInitialParameters)
{
    const AEConfig cfg = small_config();
    MultiBandAE ae(cfg, 41);
    const MultiBandAE before = ae;
    TrainConfig tc;
    tc.batch = 10;
    tc.samples = 20;
    tc.data = data_config(8, 8);
    const auto st = train(ae, tc, random_paths);
    EXPECT_TRUE(st.trace.empty());
    EXPECT_TRUE(ae.encoder(0).fc1.w.value == before.encoder(0).fc1.w.value);
    EXPECT_TRUE(ae.decoder(1).out.b.value == before.decoder(1).out.b.value);
}

TEST(Training, PretrainingReducesReconstructionLoss)
{
    const AEConfig cfg = small_config();
    MultiBandAE ae(cfg, 42);
    TrainConfig tc;
    tc.batch = 32;
    tc.samples = 256;
    tc.k1 = 150;
    tc.snr_db = 200.0;
    tc.lr = 3e-3;
    tc.data = data_config(8, 8);
    const auto st = train(ae, tc, [](Rng&) { return otfs::PathSet::identity(); });
    ASSERT_EQ(st.trace.size(), 150u);
    double first = 0.0;
    double last = 0.0;
    for (int i = 0; i < 10; ++i) {
        first += st.trace[i].l1;
        last += st.trace[140 + i].l1;
    }
    EXPECT_LT(last, first);
    EXPECT_EQ(st.trace.front().phase, 1);
}

TEST(Training, TwoPhaseTraceIsDeterministic)
{
    const AEConfig cfg = small_config();
    TrainConfig tc;
    tc.batch = 16;
    tc.samples = 64;
    tc.k1 = 5;
    tc.k2 = 5;
    tc.snr_range_db = std::make_pair(5.0, 15.0);
    tc.csi_error_var = 0.05;
    tc.data = data_config(8, 8);
    MultiBandAE a(cfg, 43);
    MultiBandAE b(cfg, 43);
    const auto ta = train(a, tc, random_paths);
    const auto tb = train(b, tc, random_paths);
    ASSERT_EQ(ta.trace.size(), 10u);
    for (std::size_t i = 0; i < ta.trace.size(); ++i) {
        EXPECT_EQ(ta.trace[i].total, tb.trace[i].total);
        EXPECT_EQ(ta.trace[i].phase, i < 5 ? 1 : 2);
    }
    EXPECT_EQ(ta.trace[7].total, ta.trace[7].l1 + cfg.eta * ta.trace[7].l2);
    EXPECT_EQ(ta.trace[2].total, ta.trace[2].l1);
}

TEST(Training, EvalForwardAfterTrainingIsFinite)
{
    const AEConfig cfg = small_config(Head::sd_softmax);
    MultiBandAE ae(cfg, 44);
    TrainConfig tc;
    tc.batch = 16;
    tc.samples = 64;
    tc.k1 = 10;
    tc.k2 = 10;
    tc.data = data_config(8, 8);
    train(ae, tc, random_paths);
    Fixture f = make_fixture(cfg, 64, 45);
    const auto r = infer(ae, f.batch, f.link, f.noise);
    EXPECT_TRUE(r.probs.allFinite());
    EXPECT_TRUE(std::isfinite(r.loss.total));
}

TEST(Checkpoint, RoundTripReproducesForwardExactly)
{
    AEConfig cfg = small_config(Head::sd_softmax);
    cfg.eta = 0.1;
    MultiBandAE ae(cfg, 51);
    TrainConfig tc;
    tc.batch = 16;
    tc.samples = 32;
    tc.k1 = 3;
    tc.k2 = 3;
    tc.data = data_config(8, 8);
    const auto st = train(ae, tc, random_paths);

    const auto path = std::filesystem::temp_directory_path() / "otfsim_ckpt_test.json";
    save_checkpoint(path.string(), ae, &st.adam);
    Checkpoint re = load_checkpoint(path.string());
    std::filesystem::remove(path);

    EXPECT_EQ(re.ae.config().eta, 0.1);
    EXPECT_EQ(re.ae.seed(), 51u);
    EXPECT_EQ(re.adam.t, st.adam.t);
    ASSERT_EQ(re.adam.m.size(), st.adam.m.size());
    EXPECT_TRUE(re.adam.v.back() == st.adam.v.back());
    Fixture f = make_fixture(cfg, 8, 52);
    EXPECT_TRUE(infer(ae, f.batch, f.link, f.noise).probs == infer(re.ae, f.batch, f.link, f.noise).probs);
}

TEST(Checkpoint, RejectsForeignDocuments)
{
    EXPECT_THROW(checkpoint_from_json(nlohmann::json{{"format", "other"}, {"version", 1}}), ConfigError);
    EXPECT_THROW(checkpoint_from_json(nlohmann::json::object()), ConfigError);
    auto j = checkpoint_json(*std::make_unique<MultiBandAE>(small_config(), 1));
    j["tensors"]["enc0.fc1.w"]["shape"] = {1, 1};
    EXPECT_THROW(checkpoint_from_json(j), ConfigError);
}
