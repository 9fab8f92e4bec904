#include "otfsim/papr.hpp"

#include <gtest/gtest.h>

using namespace otfsim;
using namespace otfsim::papr;

namespace {

otfs::TDFrame random_frame(int len, Rng& rng)
{
    otfs::TDFrame f{CVec(len), 1};
    for (auto& v : f.samples) v = complex_normal(rng, 1.0);
    return f;
}

// Direct band-limited evaluation: x(t) = 1/L sum_k X_k exp(j 2 pi k' t / L)
// with k' the symmetric frequency and the even-length Nyquist bin taken as
// cos(pi t) (half at +L/2, half at -L/2).
CVec direct_interpolation(const CVec& x, int j)
{
    const Eigen::Index len = x.size();
    const CVec spec = raw_dft(x);
    CVec out(len * j);
    for (Eigen::Index t = 0; t < len * j; ++t) {
        const double tau = static_cast<double>(t) / j;
        Complex acc = 0.0;
        for (Eigen::Index k = 0; k < len; ++k) {
            if (len % 2 == 0 && k == len / 2) {
                acc += spec(k) * std::cos(kPi * tau);
                continue;
            }
            const double f = k <= len / 2 ? double(k) : double(k - len);
            acc += spec(k) * std::polar(1.0, 2.0 * kPi * f * tau / len);
        }
        out(t) = acc / double(len);
    }
    return out;
}

} // namespace

TEST(Oversample, ConstantStaysConstant)
{
    otfs::TDFrame f{CVec::Constant(16, Complex(0.3, -0.4)), 1};
    for (int j : {1, 2, 4, 8}) {
        const auto o = oversample(f, j);
        ASSERT_EQ(o.samples.size(), 16 * j);
        EXPECT_EQ(o.oversample_factor, j);
        EXPECT_LT((o.samples.array() - Complex(0.3, -0.4)).abs().maxCoeff(), 1e-12);
    }
}

TEST(Oversample, ToneKeepsPeak)
{
    const int len = 32;
    otfs::TDFrame f{CVec(len), 1};
    for (int t = 0; t < len; ++t) f.samples(t) = 2.0 * std::polar(1.0, 2.0 * kPi * 5 * t / len);
    const auto o = oversample(f, 4);
    for (int t = 0; t < len * 4; ++t) EXPECT_NEAR(std::abs(o.samples(t) - 2.0 * std::polar(1.0, 2.0 * kPi * 5 * t / (4.0 * len))), 0.0, 1e-12);
    EXPECT_NEAR(o.samples.cwiseAbs().maxCoeff(), 2.0, 1e-9);
}

TEST(Oversample, KeepsOriginalSamplesAndMeanPower)
{
    Rng rng(1);
    for (int len : {16, 64, 15}) {
        const auto f = random_frame(len, rng);
        const auto o = oversample(f, 4);
        EXPECT_NEAR(o.mean_power(), f.mean_power(), 1e-10);
        const CVec direct = direct_interpolation(f.samples, 4);
        const double scale = std::sqrt(f.mean_power() / (direct.squaredNorm() / direct.size()));
        EXPECT_LT((o.samples - direct * scale).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Oversample, Errors)
{
    otfs::TDFrame f{CVec::Ones(8), 1};
    EXPECT_THROW(oversample(f, 0), ConfigError);
    f.oversample_factor = 4;
    EXPECT_THROW(oversample(f, 4), ConfigError);
}

TEST(Papr, KnownValues)
{
    otfs::TDFrame f{CVec(64), 1};
    for (int t = 0; t < 64; ++t) f.samples(t) = std::polar(1.0, 0.37 * t * t);
    EXPECT_NEAR(papr_db(f), 0.0, 1e-12);
    const Complex qpsk[] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    for (int t = 0; t < 64; ++t) f.samples(t) = qpsk[(t * 7) % 4];
    EXPECT_EQ(papr_db(f), 0.0);
    otfs::TDFrame imp{CVec::Zero(64), 1};
    imp.samples(17) = Complex(0.0, 3.0);
    EXPECT_NEAR(papr_db(imp), 10.0 * std::log10(64.0), 1e-12);
    EXPECT_THROW(papr_db(otfs::TDFrame{CVec::Zero(8), 1}), NumericalError);
}

TEST(Papr, ScaleInvariantAndNonNegative)
{
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        auto f = random_frame(64, rng);
        const double p = papr_db(f);
        EXPECT_GE(p, 0.0);
        f.samples *= Complex(-3.0, 0.7);
        EXPECT_NEAR(papr_db(f), p, 1e-12);
    }
}

TEST(Papr, OversamplingOnlyRevealsHigherPeaks)
{
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const auto f = random_frame(64, rng);
        EXPECT_GE(papr_db(oversample(f, 4)), papr_db(f) - 1e-9);
    }
}

TEST(Papr, EnsembleMeanOverride)
{
    otfs::TDFrame f{CVec::Constant(4, 1.0), 1};
    EXPECT_NEAR(papr_db(f, 0.5), 10.0 * std::log10(2.0), 1e-12);
}

TEST(Papr, ImPeakBoundHolds)
{
    Rng rng(4);
    const im::Qam qam(4);
    for (const auto& [groups, d, kz] : std::vector<std::tuple<int, int, int>>{{16, 16, 4}, {32, 8, 2}, {2, 128, 2}}) {
        im::IMConfig cfg;
        cfg.groups = groups;
        cfg.group_size = d;
        cfg.null_count = kz;
        const double bound = im_peak_bound(cfg, qam.max_power(), 16, 16);
        double worst = 0.0;
        for (int t = 0; t < 10000; ++t) {
            const auto mf = im::map_frame(random_bits(rng, cfg.bits_per_frame()), cfg, qam, 16, 16);
            worst = std::max(worst, otfs::dd_modulate(mf.grid).samples.cwiseAbs2().maxCoeff());
        }
        EXPECT_LE(worst, bound * (1 + 1e-12));
    }
    // G = M: rho^2 N max|x|^2 with rho = K_a / D
    im::IMConfig cfg;
    cfg.groups = 16;
    cfg.group_size = 16;
    cfg.null_count = 4;
    EXPECT_NEAR(im_peak_bound(cfg, 1.0, 16, 16), std::pow(12.0 / 16.0, 2) * 16.0, 1e-12);
    cfg.null_count = 0;
    EXPECT_NEAR(im_peak_bound(cfg, 1.0, 16, 16), 16.0, 1e-12);
}

TEST(Papr, ImPeakBoundAttained)
{
    // all active symbols equal on one row reach the bound
    im::IMConfig cfg;
    cfg.groups = 4;
    cfg.group_size = 4;
    cfg.null_count = 1;
    otfs::DDGrid g(4, 4);
    for (int k = 1; k < 4; ++k) g(2, k) = 1.0;
    EXPECT_NEAR(otfs::dd_modulate(g).samples.cwiseAbs2().maxCoeff(), im_peak_bound(cfg, 1.0, 4, 4), 1e-12);
}

TEST(Ccdf, StepValues)
{
    const std::vector<PaprSample> s(10, PaprSample{5.0, 0});
    const auto c = ccdf(s, {0.0, 4.0, 6.0});
    EXPECT_EQ(c.exceed_prob, (std::vector<double>{1.0, 1.0, 0.0}));
    EXPECT_THROW(ccdf({}, {1.0}), ConfigError);
}

TEST(Ccdf, UniformSamples)
{
    Rng rng(5);
    std::vector<PaprSample> s;
    for (int i = 0; i < 20000; ++i) s.push_back({10.0 * uniform01(rng), i});
    const auto c = ccdf(s, {5.0});
    EXPECT_NEAR(c.exceed_prob[0], 0.5, 4 * std::sqrt(0.25 / 20000));
}

TEST(Ccdf, MonotoneAndStartsAtOne)
{
    Rng rng(6);
    std::vector<PaprSample> s;
    for (int i = 0; i < 500; ++i) s.push_back({papr_db(random_frame(64, rng)), i});
    const auto c = ccdf(s);
    EXPECT_EQ(c.exceed_prob.front(), 1.0);
    for (std::size_t i = 1; i < c.exceed_prob.size(); ++i) EXPECT_LE(c.exceed_prob[i], c.exceed_prob[i - 1]);
}

TEST(Ccdf, MergeIsOrderIndependent)
{
    Rng rng(7);
    std::vector<double> v(300);
    for (auto& x : v) x = 14.0 * uniform01(rng);
    CcdfAccumulator all;
    for (double x : v) all.add(x);
    CcdfAccumulator a;
    CcdfAccumulator b;
    CcdfAccumulator c;
    for (int i = 0; i < 100; ++i) a.add(v[i]);
    for (int i = 100; i < 200; ++i) b.add(v[i]);
    for (int i = 200; i < 300; ++i) c.add(v[i]);
    CcdfAccumulator left = a;
    left.merge(b);
    left.merge(c);
    CcdfAccumulator right = c;
    right.merge(b);
    right.merge(a);
    EXPECT_EQ(left.curve().exceed_prob, all.curve().exceed_prob);
    EXPECT_EQ(right.curve().exceed_prob, all.curve().exceed_prob);
    EXPECT_THROW(a.merge(CcdfAccumulator({1.0})), ConfigError);
}

TEST(Ccdf, ExceedanceQuantile)
{
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    EXPECT_EQ(papr_at_exceedance(v, 0.01), 99.0);
    EXPECT_EQ(papr_at_exceedance(v, 0.1), 90.0);
}
