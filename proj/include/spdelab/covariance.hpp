#pragma once
// Temporal covariance kernels R(t,s), rectangle increments, Gram matrices,
// the integral operator K_R and an empirical (R2) ratio.

#include "core.hpp"
#include <json.hpp>

namespace spdelab {

enum class KernelKind { wiener, fbm, linear, bessel, heat, user };

struct CovarianceKernel {
    KernelKind kind = KernelKind::wiener;
    std::string name = "wiener";
    double param = 0;  // H for fbm, delta for bessel/heat
    double T = 1.0;
    std::function<double(double, double)> R;
    std::function<double(double, double)> density;  // d^2R/dtds, empty when singular/absent
    std::function<double(double)> antiderivative;   // odd A with A' = density(|.|), stationary kernels
    double r_exp = 2, s_exp = 2;
    std::optional<double> C_R;
    bool singular_density = false;

    double operator()(double t, double s) const { return R(t, s); }
};

namespace detail {

// Bessel density c0 * 2 (t/2)^nu K_nu(t), nu = (delta-1)/2, c0 = 1/(2 sqrt(pi) Gamma(delta/2)).
inline double bessel_density(double delta, double t) {
    t = std::abs(t);
    if (t == 0) return std::numeric_limits<double>::infinity();
    const double nu = (delta - 1.0) / 2.0;
    const double c0 = 1.0 / (2.0 * std::sqrt(std::numbers::pi) * std::tgamma(delta / 2.0));
    return c0 * 2.0 * std::pow(t / 2.0, nu) * std::cyl_bessel_k(std::abs(nu), t);
}

// int_0^x (x-z)^k rho(z) dz for k = 0, 1 with rho ~ z^{delta-1} at 0.  The
// substitution z = c w^{1/delta} removes the singularity on [0, min(x,1)];
// the smooth tail is done panel-wise.
inline double bessel_moment(double delta, double x, int k) {
    static const QuadRule gl = gauss_legendre(48);
    if (x <= 0) return 0;
    const double c = std::min(x, 1.0);
    double acc = 0;
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double w = 0.5 * (gl.nodes[i] + 1.0);
        const double z = c * std::pow(w, 1.0 / delta);
        const double jac = c / delta * std::pow(w, 1.0 / delta - 1.0);
        acc += 0.5 * gl.weights[i] * jac * bessel_density(delta, z) * (k ? (x - z) : 1.0);
    }
    for (double a = 1.0; a < x; a += 1.0) {
        const double b = std::min(x, a + 1.0);
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            const double z = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[i];
            acc += 0.5 * (b - a) * gl.weights[i] * bessel_density(delta, z) * (k ? (x - z) : 1.0);
        }
    }
    return acc;
}

inline double jget(const nlohmann::json& j, const char* k, double def) {
    if (!j.contains(k)) return def;
    if (!j.at(k).is_number()) throw Error(Errc::config, std::string("kernel parameter '") + k + "' must be a number");
    return j.at(k).get<double>();
}

}  // namespace detail

// Stationary kernel from Phi with Phi'' = rho, Phi(0) = Phi'(0) = 0:
// R(t,s) = Phi(t) + Phi(s) - Phi(|t-s|).
inline std::function<double(double, double)> stationary_R(std::function<double(double)> Phi) {
    return [Phi](double t, double s) { return Phi(t) + Phi(s) - Phi(std::abs(t - s)); };
}

inline const std::vector<std::string>& builtin_kernel_names() {
    static const std::vector<std::string> n = {"wiener", "fbm", "linear", "bessel", "heat"};
    return n;
}

inline CovarianceKernel builtin_kernel(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kernel") || !j.at("kernel").is_string())
        throw Error(Errc::config, "kernel config needs a string 'kernel'");
    const std::string name = j.at("kernel").get<std::string>();
    std::vector<std::string> allowed = {"kernel", "T"};
    CovarianceKernel k;
    k.name = name;
    k.T = detail::jget(j, "T", 1.0);
    if (!(k.T > 0)) throw Error(Errc::argument_range, "kernel horizon T must be positive");

    if (name == "wiener") {
        allowed.insert(allowed.end(), {"r", "s"});
        k.kind = KernelKind::wiener;
        k.R = [](double t, double s) { return std::min(t, s); };
        k.singular_density = true;
        k.r_exp = detail::jget(j, "r", 2.0);
        k.s_exp = conj_exp(k.r_exp);
        k.C_R = 1.0;
    } else if (name == "fbm") {
        allowed.push_back("H");
        const double H = detail::jget(j, "H", 0.75);
        if (!(H > 0.5 && H < 1.0)) throw Error(Errc::unsupported_parameter, "fbm needs 1/2 < H < 1");
        k.kind = KernelKind::fbm;
        k.param = H;
        k.R = [H](double t, double s) {
            return 0.5 * (std::pow(t, 2 * H) + std::pow(s, 2 * H) - std::pow(std::abs(t - s), 2 * H));
        };
        k.density = [H](double t, double s) { return H * (2 * H - 1) * std::pow(std::abs(t - s), 2 * H - 2); };
        k.antiderivative = [H](double x) { return (x < 0 ? -H : H) * std::pow(std::abs(x), 2 * H - 1); };
        k.r_exp = 1.0 / H;
        k.s_exp = 1.0 / (1.0 - H);
    } else if (name == "linear") {
        k.kind = KernelKind::linear;
        k.R = [](double t, double s) { return t * s; };
        k.density = [](double, double) { return 1.0; };
        k.antiderivative = [](double x) { return x; };
        k.r_exp = 1.0;
        k.s_exp = std::numeric_limits<double>::infinity();
        k.C_R = 1.0;
    } else if (name == "bessel") {
        allowed.push_back("delta");
        const double dl = detail::jget(j, "delta", 0.5);
        if (!(dl > 0 && dl < 1)) throw Error(Errc::unsupported_parameter, "bessel needs 0 < delta < 1");
        k.kind = KernelKind::bessel;
        k.param = dl;
        k.R = stationary_R([dl](double x) { return detail::bessel_moment(dl, x, 1); });
        k.density = [dl](double t, double s) { return detail::bessel_density(dl, t - s); };
        k.antiderivative = [dl](double x) { return x < 0 ? -detail::bessel_moment(dl, -x, 0) : detail::bessel_moment(dl, x, 0); };
        k.r_exp = 2.0 / (dl + 1.0);
        k.s_exp = conj_exp(k.r_exp);
    } else if (name == "heat") {
        allowed.insert(allowed.end(), {"delta", "r", "s"});
        const double dl = detail::jget(j, "delta", 0.1);
        if (!(dl > 0)) throw Error(Errc::unsupported_parameter, "heat needs delta > 0");
        k.kind = KernelKind::heat;
        k.param = dl;
        const double sd = std::sqrt(dl);
        const double rho0 = 1.0 / std::sqrt(4 * std::numbers::pi * dl);
        auto rho = [dl, rho0](double z) { return rho0 * std::exp(-z * z / (4 * dl)); };
        k.R = stationary_R([=](double x) {
            return x * 0.5 * std::erf(x / (2 * sd)) - 2 * dl * (rho0 - rho(x));
        });
        k.density = [rho](double t, double s) { return rho(t - s); };
        k.antiderivative = [sd](double x) { return 0.5 * std::erf(x / (2 * sd)); };
        k.r_exp = detail::jget(j, "r", 2.0);
        k.s_exp = conj_exp(k.r_exp);
    } else {
        throw Error(Errc::config, "unknown kernel '" + name + "'");
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw Error(Errc::config, "unknown key '" + it.key() + "' for kernel " + name);
    if (j.contains("s") && !j.contains("r")) throw Error(Errc::config, "give 'r'; 's' is its conjugate");
    return k;
}

inline CovarianceKernel builtin_kernel(const std::string& name, double param = 0, double T = 1.0) {
    nlohmann::json j{{"kernel", name}, {"T", T}};
    if (name == "fbm") j["H"] = param;
    if (name == "bessel" || name == "heat") j["delta"] = param;
    return builtin_kernel(j);
}

inline CovarianceKernel builtin_kernel(const char* name, double param = 0, double T = 1.0) {
    return builtin_kernel(std::string(name), param, T);
}

// Escape hatch for programmatic kernels.
inline CovarianceKernel user_kernel(std::function<double(double, double)> R, double T,
                                    std::function<double(double, double)> density = {}) {
    CovarianceKernel k;
    k.kind = KernelKind::user;
    k.name = "user";
    k.T = T;
    k.R = std::move(R);
    k.density = std::move(density);
    k.singular_density = !k.density;
    return k;
}

inline double rectangle_increment(const CovarianceKernel& k, double a, double b, double c, double d) {
    const double eps = 1e-12 * std::max(1.0, k.T);
    if (a > b || c > d) throw Error(Errc::ordering, "rectangle needs a <= b and c <= d");
    if (a < -eps || c < -eps || b > k.T + eps || d > k.T + eps)
        throw Error(Errc::argument_range, "rectangle outside [0,T]");
    return k.R(b, d) - k.R(b, c) - k.R(a, d) + k.R(a, c);
}

inline void check_increasing(const std::vector<double>& t) {
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw Error(Errc::ordering, "times must be strictly increasing");
}

inline Eigen::MatrixXd gram_matrix(const CovarianceKernel& k, const std::vector<double>& times) {
    check_increasing(times);
    const int n = int(times.size());
    Eigen::MatrixXd G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) G(i, j) = G(j, i) = k.R(times[i], times[j]);
    return G;
}

// Increments over (t_{i-1}, t_i] with t_{-1} = 0 (the first time must then be > 0).
inline Eigen::MatrixXd increment_gram(const CovarianceKernel& k, const std::vector<double>& times) {
    check_increasing(times);
    const int n = int(times.size());
    Eigen::MatrixXd G(n, n);
    auto lo = [&](int i) { return i == 0 ? 0.0 : times[i - 1]; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j)
            G(i, j) = G(j, i) = rectangle_increment(k, lo(i), times[i], lo(j), times[j]);
    return G;
}

// F with F F^T = G for a PSD G.  Pivoted LDL^T first; pivots at round-off level
// are set to zero so rank-deficient Grams (linear kernel) factor exactly.
// Clearly negative pivots trigger the jitter ladder 1e-14, 1e-12, 1e-10 x trace.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& G) {
    const int n = int(G.rows());
    if (n == 0) return G;
    if (!G.allFinite()) throw Error(Errc::kernel_validity, "Gram has non-finite entries");
    const double tr = std::max(G.trace(), std::numeric_limits<double>::min());
    for (double jitter : {0.0, 1e-14, 1e-12, 1e-10}) {
        Eigen::MatrixXd A = G;
        A.diagonal().array() += jitter * tr;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success) continue;
        Eigen::VectorXd D = ldlt.vectorD();
        const double dmax = D.maxCoeff();
        if (D.minCoeff() < -1e-13 * tr) continue;
        for (int i = 0; i < n; ++i) D(i) = D(i) <= 1e-13 * dmax ? 0.0 : std::sqrt(D(i));
        Eigen::MatrixXd L = ldlt.matrixL();
        Eigen::MatrixXd F = L * D.asDiagonal();
        return ldlt.transpositionsP().transpose() * F;
    }
    throw Error(Errc::kernel_validity, "Gram matrix not PSD after jitter escalation");
}

// Piecewise-constant function on n equal cells of [0,T].
struct SampledFunction {
    double T = 1.0;
    std::vector<double> v;
    double width() const { return T / double(v.size()); }
    double mid(std::size_t i) const { return (double(i) + 0.5) * width(); }
};

inline double lp_norm(const SampledFunction& f, double p) {
    if (std::isinf(p)) {
        double m = 0;
        for (double x : f.v) m = std::max(m, std::abs(x));
        return m;
    }
    long double s = 0;
    for (double x : f.v) s += std::pow(std::abs(x), p);
    return std::pow(double(s) * f.width(), 1.0 / p);
}

// (K_R f)(t_i) at the cell midpoints.  Stationary kernels integrate the density
// exactly over each cell through its antiderivative, which also splits the
// fbm singularity at s = t.
inline SampledFunction apply_KR(const CovarianceKernel& k, const SampledFunction& f) {
    if (k.kind == KernelKind::wiener) return f;
    if (!k.density) throw Error(Errc::density_absent, "kernel " + k.name + " has no density");
    const std::size_t n = f.v.size();
    const double h = f.width();
    SampledFunction out{f.T, std::vector<double>(n, 0.0)};
    if (k.antiderivative) {
        // A is evaluated on the difference lattice once
        std::vector<double> Aval(2 * n + 1);
        for (std::size_t q = 0; q <= 2 * n; ++q) Aval[q] = k.antiderivative((double(q) - double(n) + 0.5) * h);
        // t_i - a_j = (i - j + 0.5) h, t_i - b_j = (i - j - 0.5) h
        parallel_for(n, [&](std::size_t i) {
            long double s = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t qa = i - j + n, qb = i - j + n - 1;
                s += f.v[j] * (Aval[qa] - Aval[qb]);
            }
            out.v[i] = double(s);
        });
        return out;
    }
    static const QuadRule gl = gauss_legendre(4);
    parallel_for(n, [&](std::size_t i) {
        long double s = 0;
        const double t = f.mid(i);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double x = f.mid(j) + 0.5 * h * gl.nodes[q];
                s += f.v[j] * 0.5 * h * gl.weights[q] * k.density(t, x);
            }
        out.v[i] = double(s);
    });
    return out;
}

struct R2Report {
    std::string kernel;
    double r_exp = 2, s_exp = 2;
    double ratio = 0;
    std::vector<std::pair<int, double>> refinement_trace;
    int trials = 0;
};

inline R2Report check_R2(const CovarianceKernel& k, int trials, std::uint64_t seed,
                         std::vector<int> levels = {64, 128, 256}) {
    R2Report rep;
    rep.kernel = k.name;
    rep.r_exp = k.r_exp;
    rep.s_exp = k.s_exp;
    rep.trials = trials;
    for (int n : levels) {
        std::vector<double> ratios(trials, 0.0);
        parallel_for(std::size_t(trials), [&](std::size_t tr) {
            NormalStream rng(seed, stream_id(purpose::r2, tr));
            SampledFunction f{k.T, std::vector<double>(n, 0.0)};
            // alternate between white cells, a random sub-interval indicator and smooth bumps
            const int family = int(tr % 3);
            if (family == 0) {
                for (auto& x : f.v) x = rng.next();
            } else if (family == 1) {
                double a = rng.uniform(), b = rng.uniform();
                if (a > b) std::swap(a, b);
                for (int i = 0; i < n; ++i) {
                    const double t = f.mid(i) / k.T;
                    f.v[i] = (t >= a && t <= b) ? 1.0 : 0.0;
                }
                if (lp_norm(f, 1.0) == 0) f.v[std::size_t(a * (n - 1))] = 1.0;
            } else {
                const double c = rng.uniform(), w = 0.02 + 0.3 * rng.uniform();
                for (int i = 0; i < n; ++i) {
                    const double t = f.mid(i) / k.T;
                    f.v[i] = std::exp(-0.5 * (t - c) * (t - c) / (w * w));
                }
            }
            const double den = lp_norm(f, k.r_exp);
            ratios[tr] = den > 0 ? lp_norm(apply_KR(k, f), k.s_exp) / den : 0.0;
        });
        const double r = *std::max_element(ratios.begin(), ratios.end());
        rep.refinement_trace.emplace_back(n, r);
        rep.ratio = std::max(rep.ratio, r);
    }
    return rep;
}

}  // namespace spdelab
