#include "otfsim/coding/ldpc.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <sstream>

using namespace otfsim;
using namespace otfsim::coding;

namespace {

const LdpcCode& code96()
{
    static const LdpcCode code = ldpc_build(LdpcSpec{});
    return code;
}

// Toy code with a hand-written 6 x 12 parity-check matrix; every column has
// weight 2, so the rows sum to zero and the rank is 5 (k = 7).
LdpcCode toy_code()
{
    return LdpcCode(12, {{0, 1, 2, 6}, {3, 4, 5, 7}, {0, 3, 8, 9}, {1, 4, 9, 10}, {2, 5, 10, 11}, {6, 7, 8, 11}});
}

RVec to_llr(const Bits& c, double mag)
{
    RVec l(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) l(static_cast<Eigen::Index>(i)) = c[i] ? mag : -mag;
    return l;
}

Bits xor_bits(const Bits& a, const Bits& b)
{
    Bits r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] ^ b[i];
    return r;
}

} // namespace

TEST(LdpcBuild, DimensionsRegularityAndGirth)
{
    const auto& code = code96();
    EXPECT_EQ(code.n(), 96);
    EXPECT_EQ(code.k(), 32);
    EXPECT_EQ(code.m(), 64);
    EXPECT_DOUBLE_EQ(code.rate(), 1.0 / 3.0);
    for (const auto& v : code.vars()) EXPECT_EQ(v.size(), 3u);
    EXPECT_TRUE(code.girth_at_least_6());
}

TEST(LdpcBuild, GeneratorRowsSatisfyChecks)
{
    const auto& code = code96();
    for (int i = 0; i < code.k(); ++i) {
        Bits u(code.k(), 0);
        u[i] = 1;
        const Bits c = code.encode(u);
        EXPECT_TRUE(code.is_codeword(c)) << i;
        EXPECT_EQ(code.extract_info(c), u);
    }
}

TEST(LdpcBuild, SeedDeterminism)
{
    const LdpcCode a = ldpc_build(LdpcSpec{96, 1.0 / 3.0, 3, 7});
    const LdpcCode b = ldpc_build(LdpcSpec{96, 1.0 / 3.0, 3, 7});
    const LdpcCode c = ldpc_build(LdpcSpec{96, 1.0 / 3.0, 3, 8});
    EXPECT_EQ(a.checks(), b.checks());
    EXPECT_NE(a.checks(), c.checks());
}

TEST(LdpcBuild, InfeasibleProfiles)
{
    EXPECT_THROW(ldpc_build(LdpcSpec{96, 1.5, 3, 1}), ConfigError);
    EXPECT_THROW(ldpc_build(LdpcSpec{97, 1.0 / 3.0, 3, 1}), ConfigError);
    // 12 columns of weight 3 over 8 rows need 36 distinct row pairs; only 28 exist
    EXPECT_THROW(ldpc_build(LdpcSpec{12, 1.0 / 3.0, 3, 1, 8}), ConfigError);
}

TEST(LdpcBuild, LargerCodes)
{
    const LdpcCode code = ldpc_build(LdpcSpec{1024, 0.5, 3, 3});
    EXPECT_EQ(code.k(), 512);
    EXPECT_TRUE(code.girth_at_least_6());
}

TEST(Alist, StreamRoundTrip)
{
    std::stringstream ss;
    write_alist(ss, code96());
    const LdpcCode back = read_alist(ss);
    EXPECT_EQ(back.checks(), code96().checks());
    EXPECT_EQ(back.info_positions(), code96().info_positions());
}

TEST(Alist, FileRoundTrip)
{
    const std::string path = ::testing::TempDir() + "otfsim_code96.alist";
    save_alist(path, code96());
    EXPECT_EQ(load_alist(path).checks(), code96().checks());
    std::remove(path.c_str());
    EXPECT_THROW(load_alist(path), ConfigError);
}

TEST(Alist, ParsesHandWrittenFile)
{
    // 4 x 2 matrix [1 1 0 1; 0 1 1 1]
    std::istringstream in("4 2\n2 3\n1 2 1 2\n3 3\n1 0\n1 2\n2 0\n1 2\n1 2 4\n2 3 4\n");
    const LdpcCode code = read_alist(in);
    EXPECT_EQ(code.checks(), (std::vector<std::vector<int>>{{0, 1, 3}, {1, 2, 3}}));
    EXPECT_EQ(code.k(), 2);
    std::istringstream bad("4 2\n2 3\n1 2 1 2\n3 3\n1 0\n1 2\n2 0\n1 2\n1 2 3\n2 3 4\n");
    EXPECT_THROW(read_alist(bad), ConfigError);
}

TEST(Encode, ZeroAndParity)
{
    const auto& code = code96();
    EXPECT_EQ(code.encode(Bits(32, 0)), Bits(96, 0));
    Rng rng(1);
    for (int t = 0; t < 200; ++t) EXPECT_TRUE(code.is_codeword(code.encode(random_bits(rng, 32))));
    EXPECT_THROW(code.encode(Bits(31, 0)), ConfigError);
}

TEST(Encode, LinearityExhaustiveOnToyCode)
{
    const LdpcCode code = toy_code();
    ASSERT_EQ(code.k(), 7);
    for (unsigned a = 0; a < 128; ++a)
        for (unsigned b = 0; b < 128; ++b) {
            Bits ua(7);
            Bits ub(7);
            for (int i = 0; i < 7; ++i) {
                ua[i] = (a >> i) & 1;
                ub[i] = (b >> i) & 1;
            }
            EXPECT_EQ(code.encode(xor_bits(ua, ub)), xor_bits(code.encode(ua), code.encode(ub)));
        }
}

TEST(Decode, NoiselessInAtMostOneIteration)
{
    const auto& code = code96();
    Rng rng(2);
    const Bits c = code.encode(random_bits(rng, 32));
    const auto res = ldpc_decode(to_llr(c, 40.0), code, 50);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.iterations, 1);
    EXPECT_EQ(res.bits, c);
}

TEST(Decode, CorrectsAnySingleConfidentError)
{
    const auto& code = code96();
    Rng rng(3);
    const Bits c = code.encode(random_bits(rng, 32));
    for (int pos = 0; pos < 96; ++pos) {
        RVec l = to_llr(c, 8.0);
        l(pos) = -l(pos);
        const auto res = ldpc_decode(l, code, 50);
        EXPECT_TRUE(res.converged) << pos;
        EXPECT_EQ(res.bits, c) << pos;
    }
}

TEST(Decode, ConvergedOutputsAreCodewordsAndExtrinsicConsistent)
{
    const auto& code = code96();
    Rng rng(4);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const Bits c = code.encode(random_bits(rng, 32));
        RVec l = to_llr(c, 2.0);
        for (auto& v : l) v += 2.0 * nd(rng);
        const auto res = ldpc_decode(l, code, 30);
        if (res.converged) {
            EXPECT_TRUE(code.is_codeword(res.bits));
        }
        for (int i = 0; i < 96; ++i) {
            EXPECT_LE(std::abs(res.posterior(i)), kLlrClamp);
            EXPECT_EQ(res.bits[i], res.posterior(i) > 0.0 ? 1 : 0);
        }
    }
}

TEST(Decode, ZeroIterationsIsHardDecision)
{
    const auto& code = code96();
    RVec l = RVec::Constant(96, -3.0);
    l(5) = 3.0;
    const auto res = ldpc_decode(l, code, 0);
    EXPECT_EQ(res.iterations, 0);
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.bits[5], 1);
    EXPECT_LT(res.extrinsic.cwiseAbs().maxCoeff(), 1e-12);
}
