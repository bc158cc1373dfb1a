#include <gtest/gtest.h>

#include <spdelab/covariance.hpp>

using namespace spdelab;

namespace {

// Independent 2D tensor Gauss-Legendre of a density over [a,b] x [c,d],
// panel-split so the diagonal singularity sits on panel edges.
double rect_quadrature(const std::function<double(double, double)>& rho, double a, double b, double c, double d,
                       int panels) {
    const auto q = gauss_legendre(24);
    double s = 0;
    const double hx = (b - a) / panels, hy = (d - c) / panels;
    for (int i = 0; i < panels; ++i)
        for (int j = 0; j < panels; ++j)
            for (std::size_t u = 0; u < q.nodes.size(); ++u)
                for (std::size_t v = 0; v < q.nodes.size(); ++v) {
                    const double x = a + hx * (i + 0.5 + 0.5 * q.nodes[u]);
                    const double y = c + hy * (j + 0.5 + 0.5 * q.nodes[v]);
                    s += 0.25 * hx * hy * q.weights[u] * q.weights[v] * rho(x, y);
                }
    return s;
}

}  // namespace

TEST(Kernels, BuiltinsAndRejections) {
    for (const auto& n : builtin_kernel_names()) EXPECT_NO_THROW(builtin_kernel(nlohmann::json{{"kernel", n}})) << n;
    EXPECT_THROW(builtin_kernel("fbm", 0.3), Error);
    EXPECT_THROW(builtin_kernel("bessel", 1.5), Error);
    EXPECT_THROW(builtin_kernel(nlohmann::json{{"kernel", "wiener"}, {"H", 0.7}}), Error);
    EXPECT_THROW(builtin_kernel(nlohmann::json{{"kernel", "wiener"}, {"s", 3}}), Error);
}

TEST(Kernels, FbmIncrementCorrelation) {
    const auto k = builtin_kernel("fbm", 0.75, 2.0);
    // Cov(B_1 - B_0, B_2 - B_1) = (2^{2H} - 2) / 2 = sqrt 2 - 1 at H = 3/4
    EXPECT_NEAR(rectangle_increment(k, 0, 1, 1, 2), std::sqrt(2.0) - 1.0, 1e-14);
    EXPECT_NEAR(rectangle_increment(k, 0, 1, 0, 1), 1.0, 1e-14);
}

TEST(Kernels, RectangleSymmetryAndOrdering) {
    const auto k = builtin_kernel("heat", 0.1);
    EXPECT_NEAR(rectangle_increment(k, 0.1, 0.4, 0.3, 0.9), rectangle_increment(k, 0.3, 0.9, 0.1, 0.4), 1e-15);
    EXPECT_THROW(rectangle_increment(k, 0.4, 0.1, 0.0, 1.0), Error);
}

// Smooth densities: the rectangle increment equals the double integral of the density.
TEST(Kernels, HeatRectangleMatchesQuadrature) {
    const auto k = builtin_kernel("heat", 0.1);
    for (auto [a, b, c, d] : std::vector<std::array<double, 4>>{{0, 0.5, 0.5, 1}, {0.1, 0.3, 0.6, 0.9}, {0, 1, 0, 1}}) {
        const double q = rect_quadrature(k.density, a, b, c, d, 8);
        EXPECT_NEAR(rectangle_increment(k, a, b, c, d), q, 1e-12) << a << " " << c;
    }
}

// Bessel R is built from a substituted moment integral; check it against a plain
// 2D quadrature of the density on off-diagonal rectangles and a Laguerre rule
// for the density mass near the origin.
TEST(Kernels, BesselAgainstIndependentQuadratures) {
    const double dl = 0.5;
    const auto k = builtin_kernel("bessel", dl);
    for (auto [a, b, c, d] : std::vector<std::array<double, 4>>{{0, 0.3, 0.5, 1}, {0.2, 0.4, 0.7, 0.8}}) {
        const double q = rect_quadrature(k.density, a, b, c, d, 4);
        EXPECT_NEAR(rectangle_increment(k, a, b, c, d) / q, 1.0, 1e-9);
    }
    // int_0^inf rho(z) dz = 1/2 for the normalized density; the substitution z = y
    // turns the tail into a generalized Laguerre integral of y^{nu} K_nu(y) e^{y}.
    const auto lag = gauss_laguerre(64, dl - 1.0);
    double mass = 0;
    for (std::size_t i = 0; i < lag.nodes.size(); ++i) {
        const double y = lag.nodes[i];
        mass += lag.weights[i] * detail::bessel_density(dl, y) * std::exp(y) * std::pow(y, 1.0 - dl);
    }
    // K_nu carries a y^{1/2} correction, so Gauss-Laguerre only converges algebraically here
    EXPECT_NEAR(mass, 0.5, 2e-3);
    EXPECT_NEAR(detail::bessel_moment(dl, 40.0, 0), 0.5, 1e-6);
}

TEST(Gram, FactorReconstructs) {
    const auto k = builtin_kernel("fbm", 0.75);
    std::vector<double> t;
    for (int i = 1; i <= 40; ++i) t.push_back(i / 40.0);
    const Eigen::MatrixXd G = gram_matrix(k, t);
    const Eigen::MatrixXd F = psd_factor(G);
    EXPECT_LT((F * F.transpose() - G).norm(), 1e-10 * G.norm());
    const Eigen::MatrixXd I = increment_gram(k, t);
    EXPECT_NEAR(I(0, 1), rectangle_increment(k, 0, t[0], t[0], t[1]), 1e-15);
}

TEST(Gram, RankDeficientIsAccepted) {
    // linear kernel: rank one
    const auto k = builtin_kernel("linear");
    const Eigen::MatrixXd G = gram_matrix(k, {0.2, 0.5, 0.9});
    const Eigen::MatrixXd F = psd_factor(G);
    EXPECT_LT((F * F.transpose() - G).norm(), 1e-10);
}

TEST(Gram, IndefiniteRejected) {
    Eigen::MatrixXd G(2, 2);
    G << 1, 2, 2, 1;
    try {
        psd_factor(G);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), Errc::kernel_validity);
    }
}

// fbm K_R applied to 1 on [0,1]: H ((t)^{2H-1} + (1-t)^{2H-1}) exactly.
TEST(KR, FbmOnConstant) {
    const double H = 0.75;
    const auto k = builtin_kernel("fbm", H);
    SampledFunction f{1.0, std::vector<double>(64, 1.0)};
    const auto g = apply_KR(k, f);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
        const double t = f.mid(i);
        EXPECT_NEAR(g.v[i], H * (std::pow(t, 2 * H - 1) + std::pow(1 - t, 2 * H - 1)), 1e-12);
    }
}

TEST(KR, WienerIsIdentityAndUserNeedsDensity) {
    SampledFunction f{1.0, {1.0, 2.0, 3.0}};
    EXPECT_EQ(apply_KR(builtin_kernel("wiener"), f).v, f.v);
    const auto u = user_kernel([](double t, double s) { return std::min(t, s); }, 1.0);
    EXPECT_THROW(apply_KR(u, f), Error);
}

TEST(R2, FiniteRatioStableAcrossLevels) {
    const auto rep = check_R2(builtin_kernel("fbm", 0.75), 12, 3);
    ASSERT_EQ(rep.refinement_trace.size(), 3u);
    EXPECT_TRUE(std::isfinite(rep.ratio));
    const double a = rep.refinement_trace.front().second, b = rep.refinement_trace.back().second;
    EXPECT_LT(std::abs(b - a) / std::max(a, b), 0.25);
}
