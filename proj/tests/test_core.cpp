#include <gtest/gtest.h>

#include <cstdlib>

#include <spdelab/core.hpp>

using namespace spdelab;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
    auto a = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(a[0], 0x6627e8d5u);
    EXPECT_EQ(a[1], 0xe169c58du);
    EXPECT_EQ(a[2], 0xbc57ac4cu);
    EXPECT_EQ(a[3], 0x9b00dbd8u);
    auto b = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(b[0], 0x408f276du);
    EXPECT_EQ(b[1], 0x41c83b0eu);
    EXPECT_EQ(b[2], 0xa20bc7c6u);
    EXPECT_EQ(b[3], 0x6d5451fdu);
}

TEST(NormalStream, ReproducibleAndSeparated) {
    NormalStream a(7, stream_id(1, 2)), b(7, stream_id(1, 2)), c(7, stream_id(1, 3)), d(8, stream_id(1, 2));
    int same_c = 0, same_d = 0;
    for (int i = 0; i < 100; ++i) {
        const double x = a.next();
        EXPECT_EQ(x, b.next());
        same_c += x == c.next();
        same_d += x == d.next();
    }
    EXPECT_EQ(same_c, 0);
    EXPECT_EQ(same_d, 0);
}

TEST(NormalStream, StandardNormalMoments) {
    NormalStream r(11, 0);
    std::vector<double> x(200000);
    for (auto& v : x) v = r.next();
    const auto m = moments(x);
    EXPECT_LT(std::abs(m.mean), 4 * m.se_mean);
    EXPECT_LT(std::abs(m.var - 1.0), 4 * m.se_var);
}

TEST(Moments, SmallSamples) {
    EXPECT_EQ(moments({}).n, 0u);
    EXPECT_EQ(moments({3.0}).mean, 3.0);
    const auto m = moments({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.var, 5.0 / 3.0);
}

TEST(Quadrature, LegendreExactForPolynomials) {
    const auto q = gauss_legendre(8);
    // degree 15 is the limit
    for (int k = 0; k <= 15; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * std::pow(q.nodes[i], k);
        const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
        EXPECT_NEAR(s, exact, 1e-13) << k;
    }
}

TEST(Quadrature, LaguerreMoments) {
    const double a = -0.5;
    const auto q = gauss_laguerre(20, a);
    for (int k = 0; k <= 10; ++k) {
        double s = 0;
        for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * std::pow(q.nodes[i], k);
        const double exact = std::tgamma(a + 1 + k);
        EXPECT_NEAR(s / exact, 1.0, 1e-11) << k;
    }
}

TEST(Quadrature, Simpson) {
    const double s = simpson([](double x) { return std::exp(x); }, 0.0, 1.0, 0.01);
    EXPECT_NEAR(s, std::exp(1.0) - 1.0, 1e-9);
}

TEST(Threads, ParallelForFillsEverySlotOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Threads, ExceptionsPropagate) {
    EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                     if (i == 7) throw Error(Errc::argument_range, "boom");
                 }),
                 Error);
}

TEST(Threads, EnvironmentCap) {
    setenv("TOOL_THREADS", "1", 1);
    EXPECT_EQ(thread_count(), 1u);
    unsetenv("TOOL_THREADS");
}

TEST(Misc, ConjugateExponent) {
    EXPECT_DOUBLE_EQ(conj_exp(2.0), 2.0);
    EXPECT_DOUBLE_EQ(conj_exp(4.0 / 3.0), 4.0);
    EXPECT_TRUE(std::isinf(conj_exp(1.0)));
    EXPECT_EQ(conj_exp(std::numeric_limits<double>::infinity()), 1.0);
    EXPECT_TRUE(is_pow2(64));
    EXPECT_FALSE(is_pow2(48));
}
