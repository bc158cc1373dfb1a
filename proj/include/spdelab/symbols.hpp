#pragma once
// Numerical checkers for the symbol classes and the multiplier conditions
// (Marcinkiewicz, Mihlin, Hormander), plus an empirical L^p multiplier norm.

#include "spectral.hpp"

namespace spdelab {

enum class Condition { marcinkiewicz, mihlin, hormander, class_M, class_S };

inline const char* condition_name(Condition c) {
    switch (c) {
    case Condition::marcinkiewicz: return "marcinkiewicz";
    case Condition::mihlin: return "mihlin";
    case Condition::hormander: return "hormander";
    case Condition::class_M: return "class_M";
    case Condition::class_S: return "class_S";
    }
    return "?";
}

struct MultiplierReport {
    Condition condition = Condition::mihlin;
    std::string symbol;
    double worst_constant = 0;                 // sup of the checked quantity
    double lower_constant = std::numeric_limits<double>::quiet_NaN();  // class checks only
    double refined_constant = std::numeric_limits<double>::quiet_NaN();
    double hormander_constant = std::numeric_limits<double>::quiet_NaN();
    std::vector<int> worst_alpha;
    std::vector<double> worst_xi;
    bool passed = false;
    long samples_used = 0;
    std::string detail;
};

struct CheckOptions {
    double tol = 0.05;
    double cap = 1e6;
    int level_min = -8, level_max = 8;
    int refine_extra = 4;  // extra dyadic levels on each side for the refinement pass
};

using XiSet = std::vector<std::vector<double>>;

// Dyadic sample set avoiding 0 and the coordinate hyperplanes.
inline XiSet dyadic_samples(int d, int kmin = -8, int kmax = 8) {
    std::vector<double> axis;
    const int step = d >= 3 ? 2 : 1;
    const std::vector<double> mant = d == 1 ? std::vector<double>{1.0, 1.5} : std::vector<double>{1.25};
    for (int k = kmin; k <= kmax; k += step)
        for (double c : mant)
            for (double s : {-1.0, 1.0}) axis.push_back(s * c * std::ldexp(1.0, k));
    XiSet out;
    std::vector<double> xi(d);
    std::function<void(int)> rec = [&](int a) {
        if (a == d) {
            out.push_back(xi);
            return;
        }
        for (double v : axis) {
            xi[a] = v;
            rec(a + 1);
        }
    };
    rec(0);
    return out;
}

inline std::vector<std::vector<int>> multi_indices(int d, int max_order) {
    std::vector<std::vector<int>> out;
    std::vector<int> a(d, 0);
    std::function<void(int, int)> rec = [&](int axis, int left) {
        if (axis == d) {
            out.push_back(a);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            a[axis] = k;
            rec(axis + 1, left - k);
        }
        a[axis] = 0;
    };
    rec(0, max_order);
    return out;
}

// Central finite-difference partial derivative d^alpha f(t, xi); the step on
// axis a is 1e-4 |xi_a| (1e-4 |xi| if that coordinate is zero).
inline cplx fd_derivative(const SymbolFn& f, double t, std::vector<double> xi, const std::vector<int>& alpha,
                          int axis = 0) {
    const int d = int(xi.size());
    while (axis < d && alpha[axis] == 0) ++axis;
    if (axis == d) return f(t, xi);
    const int k = alpha[axis];
    double base = std::abs(xi[axis]);
    if (base == 0) base = norm2(xi);
    const double h = 1e-4 * base;
    const double x0 = xi[axis];
    if (!(h > 0) || !std::isfinite(h) || x0 + h == x0 || h < 1e-280)
        throw Error(Errc::numerical_precision, "finite-difference step underflow");
    cplx acc = 0;
    double binom = 1;
    for (int j = 0; j <= k; ++j) {
        xi[axis] = x0 + (0.5 * k - j) * h;
        acc += ((j % 2) ? -binom : binom) * fd_derivative(f, t, xi, alpha, axis + 1);
        binom = binom * (k - j) / (j + 1);
    }
    return acc / std::pow(h, k);
}

namespace detail {
inline bool on_hyperplane(const std::vector<double>& xi) {
    for (double v : xi)
        if (v == 0.0) return true;
    return false;
}
inline SymbolFn raw(const SymbolSpec& s) {
    return [&s](double t, std::span<const double> xi) { return s(t, xi); };
}
}  // namespace detail

inline MultiplierReport check_class_M(const SymbolSpec& sym, const XiSet& xi_samples, int max_order,
                                      const CheckOptions& opt = {}) {
    if (sym.time_dependent) throw Error(Errc::class_violation, sym.name + " is time dependent");
    if (max_order > sym.n_depth) throw Error(Errc::argument_range, "max_order exceeds declared n_depth");
    MultiplierReport r;
    r.condition = Condition::class_M;
    r.symbol = sym.name;
    r.lower_constant = std::numeric_limits<double>::infinity();
    const auto alphas = multi_indices(sym.dim, max_order);
    const SymbolFn f = detail::raw(sym);
    for (const auto& xi : xi_samples) {
        const double nx = norm2(xi);
        if (nx == 0) throw Error(Errc::argument_range, "xi samples must exclude 0");
        const cplx v = sym(0.0, xi);
        if (!(v.real() > 0) || std::abs(v.imag()) > 1e-12 * std::abs(v.real()))
            throw Error(Errc::class_violation, sym.name + " is not real positive at a sample");
        r.lower_constant = std::min(r.lower_constant, v.real() / std::pow(nx, sym.gamma));
        for (const auto& a : alphas) {
            int ord = 0;
            for (int k : a) ord += k;
            double c = std::abs(fd_derivative(f, 0.0, xi, a)) * std::pow(nx, ord - sym.gamma);
            if (std::isnan(c)) c = std::numeric_limits<double>::infinity();
            if (c > r.worst_constant) {
                r.worst_constant = c;
                r.worst_alpha = a;
                r.worst_xi = xi;
            }
            ++r.samples_used;
        }
    }
    r.passed = std::isfinite(r.worst_constant) && r.lower_constant >= sym.kappa * (1 - opt.tol) &&
               r.worst_constant <= sym.mu * (1 + opt.tol);
    if (!r.passed)
        r.detail = r.lower_constant < sym.kappa * (1 - opt.tol) ? "lower bound" : "derivative bound";
    return r;
}

// Positive real parts are reported as a failed (S1) report; enforce() turns
// any failed report into a class-violation error.
inline MultiplierReport check_class_S(const SymbolSpec& sym, const std::vector<double>& t_samples,
                                      const XiSet& xi_samples, const CheckOptions& opt = {}) {
    MultiplierReport r;
    r.condition = Condition::class_S;
    r.symbol = sym.name;
    r.lower_constant = std::numeric_limits<double>::infinity();
    const int order = sym.dim / 2 + 1;
    const auto alphas = multi_indices(sym.dim, std::min(order, sym.n_depth));
    const SymbolFn f = detail::raw(sym);
    bool positive = false;
    for (double t : t_samples)
        for (const auto& xi : xi_samples) {
            if (detail::on_hyperplane(xi))
                throw Error(Errc::argument_range, "xi samples must avoid coordinate hyperplanes");
            const double nx = norm2(xi);
            const double g = std::pow(nx, sym.gamma);
            const cplx v = sym(t, xi);
            if (v.real() > 0) positive = true;
            r.lower_constant = std::min(r.lower_constant, -v.real() / g);
            for (const auto& a : alphas) {
                int ord = 0;
                for (int k : a) ord += k;
                double c = std::abs(fd_derivative(f, t, xi, a)) * std::pow(nx, ord) / g;
                if (std::isnan(c)) c = std::numeric_limits<double>::infinity();
                if (c > r.worst_constant) {
                    r.worst_constant = c;
                    r.worst_alpha = a;
                    r.worst_xi = xi;
                }
                ++r.samples_used;
            }
        }
    const bool s1 = !positive && r.lower_constant >= sym.kappa * (1 - opt.tol);
    const bool s2 = std::isfinite(r.worst_constant) && r.worst_constant <= sym.mu * (1 + opt.tol);
    r.passed = s1 && s2;
    if (!s1) r.detail = positive ? "S1: positive real part" : "S1: lower bound";
    else if (!s2) r.detail = "S2: derivative bound";
    return r;
}

inline void enforce(const MultiplierReport& r) {
    if (!r.passed) throw Error(Errc::class_violation, r.symbol + " fails " + condition_name(r.condition) +
                                                          (r.detail.empty() ? "" : " (" + r.detail + ")"));
}

namespace detail {

// sup over dyadic rectangles of int_A |d_S m| for every subset S of axes.
inline double marcinkiewicz_sup(const SymbolSpec& m, int lmin, int lmax, long budget, long& used,
                                std::vector<int>& worst_alpha, std::vector<double>& worst_xi) {
    const int d = m.dim;
    const SymbolFn f = raw(m);
    const QuadRule gl = gauss_legendre(6);
    const double ln2 = std::log(2.0);
    // fixed values for the coordinates outside S
    std::vector<double> others;
    for (int k = lmin; k <= lmax; k += 2)
        for (double s : {-1.0, 1.0}) others.push_back(s * 1.5 * std::ldexp(1.0, k));
    // rectangle "corners": sign * 2^l for each axis
    std::vector<double> corners;
    for (int l = lmin; l <= lmax; ++l)
        for (double s : {-1.0, 1.0}) corners.push_back(s * std::ldexp(1.0, l));

    double sup = 0;
    for (int mask = 0; mask < (1 << d); ++mask) {
        std::vector<int> S, rest;
        for (int a = 0; a < d; ++a) (mask >> a & 1 ? S : rest).push_back(a);
        std::vector<int> alpha(d, 0);
        for (int a : S) alpha[a] = 1;
        // enumerate (corner per S axis) x (fixed value per other axis)
        long total = 1;
        for (std::size_t i = 0; i < S.size(); ++i) total *= long(corners.size());
        for (std::size_t i = 0; i < rest.size(); ++i) total *= long(others.size());
        const long stride = std::max(1L, total / std::max(1L, budget));
        for (long id = 0; id < total; id += stride) {
            long rem = id;
            std::vector<double> lo(d);
            for (int a : S) {
                lo[a] = corners[rem % long(corners.size())];
                rem /= long(corners.size());
            }
            for (int a : rest) {
                lo[a] = others[rem % long(others.size())];
                rem /= long(others.size());
            }
            double integral = 0;
            if (S.empty()) {
                integral = std::abs(f(0.0, lo));
            } else {
                // tensor Gauss-Legendre in log coordinates: xi_a = lo_a * e^u, u in [0, ln 2]
                const int k = int(S.size());
                long nq = 1;
                for (int i = 0; i < k; ++i) nq *= long(gl.nodes.size());
                std::vector<double> xi = lo;
                for (long q = 0; q < nq; ++q) {
                    long qr = q;
                    double w = 1;
                    for (int a : S) {
                        const int iq = int(qr % long(gl.nodes.size()));
                        qr /= long(gl.nodes.size());
                        const double u = 0.5 * ln2 * (gl.nodes[iq] + 1.0);
                        xi[a] = lo[a] * std::exp(u);
                        w *= 0.5 * ln2 * gl.weights[iq] * std::abs(xi[a]);
                    }
                    integral += w * std::abs(fd_derivative(f, 0.0, xi, alpha));
                }
            }
            if (std::isnan(integral)) integral = std::numeric_limits<double>::infinity();
            if (integral > sup) {
                sup = integral;
                worst_alpha = alpha;
                worst_xi = lo;
            }
            ++used;
        }
    }
    return sup;
}

}  // namespace detail

inline MultiplierReport check_marcinkiewicz(const SymbolSpec& m, long rectangle_budget = 4096,
                                            const CheckOptions& opt = {}) {
    MultiplierReport r;
    r.condition = Condition::marcinkiewicz;
    r.symbol = m.name;
    std::vector<int> wa;
    std::vector<double> wx;
    r.worst_constant =
        detail::marcinkiewicz_sup(m, opt.level_min, opt.level_max, rectangle_budget, r.samples_used, r.worst_alpha,
                                  r.worst_xi);
    r.refined_constant = detail::marcinkiewicz_sup(m, opt.level_min - opt.refine_extra,
                                                   opt.level_max + opt.refine_extra, rectangle_budget,
                                                   r.samples_used, wa, wx);
    r.passed = std::isfinite(r.refined_constant) && r.worst_constant <= opt.cap &&
               r.refined_constant <= r.worst_constant * (1 + opt.tol) + 1e-12;
    if (!r.passed) r.detail = "rectangle integrals grow under refinement";
    return r;
}

namespace detail {

inline double mihlin_sup(const SymbolSpec& m, const XiSet& xs, long& used, std::vector<int>* wa,
                         std::vector<double>* wx) {
    const SymbolFn f = raw(m);
    const auto alphas = multi_indices(m.dim, m.dim / 2 + 1);
    double sup = 0;
    for (const auto& xi : xs) {
        const double nx = norm2(xi);
        for (const auto& a : alphas) {
            int ord = 0;
            for (int k : a) ord += k;
            double c = std::abs(fd_derivative(f, 0.0, xi, a)) * std::pow(nx, ord);
            if (std::isnan(c)) c = std::numeric_limits<double>::infinity();
            if (c > sup) {
                sup = c;
                if (wa) *wa = a;
                if (wx) *wx = xi;
            }
            ++used;
        }
    }
    return sup;
}

// sup_R R^{-d+2|alpha|} int_{R<|xi|<2R} |d^alpha m|^2, d = 1 or 2.
inline double hormander_sup(const SymbolSpec& m, int lmin, int lmax) {
    const SymbolFn f = raw(m);
    const int d = m.dim;
    const auto alphas = multi_indices(d, d / 2 + 1);
    const QuadRule gl = gauss_legendre(8);
    double sup = 0;
    for (int l = lmin; l <= lmax; ++l) {
        const double R = std::ldexp(1.0, l);
        for (const auto& a : alphas) {
            int ord = 0;
            for (int k : a) ord += k;
            double integral = 0;
            for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
                const double rad = R * (1.5 + 0.5 * gl.nodes[i]);
                const double wr = 0.5 * R * gl.weights[i];
                if (d == 1) {
                    for (double s : {-1.0, 1.0}) {
                        std::vector<double> xi{s * rad};
                        integral += wr * std::norm(fd_derivative(f, 0.0, xi, a));
                    }
                } else {
                    const int nth = 64;
                    for (int k = 0; k < nth; ++k) {
                        const double th = 2 * std::numbers::pi * (k + 0.5) / nth + 0.013;
                        std::vector<double> xi{rad * std::cos(th), rad * std::sin(th)};
                        if (d > 2) xi.resize(d, 0.37 * rad);
                        integral += wr * rad * (2 * std::numbers::pi / nth) * std::norm(fd_derivative(f, 0.0, xi, a));
                    }
                }
            }
            sup = std::max(sup, std::pow(R, -d + 2.0 * ord) * integral);
        }
    }
    return sup;
}

}  // namespace detail

inline MultiplierReport check_mihlin(const SymbolSpec& m, const XiSet& xi_samples, bool with_hormander = false,
                                     const CheckOptions& opt = {}) {
    MultiplierReport r;
    r.condition = Condition::mihlin;
    r.symbol = m.name;
    for (const auto& xi : xi_samples)
        if (norm2(xi) == 0) throw Error(Errc::argument_range, "xi samples must exclude 0");
    r.worst_constant = detail::mihlin_sup(m, xi_samples, r.samples_used, &r.worst_alpha, &r.worst_xi);
    XiSet wide = xi_samples;
    const XiSet extra = dyadic_samples(m.dim, opt.level_min - opt.refine_extra, opt.level_max + opt.refine_extra);
    wide.insert(wide.end(), extra.begin(), extra.end());
    r.refined_constant = detail::mihlin_sup(m, wide, r.samples_used, nullptr, nullptr);
    r.passed = std::isfinite(r.refined_constant) && r.worst_constant <= opt.cap &&
               r.refined_constant <= r.worst_constant * (1 + opt.tol) + 1e-12;
    if (with_hormander && m.dim <= 2) {
        const double h0 = detail::hormander_sup(m, opt.level_min, opt.level_max);
        const double h1 = detail::hormander_sup(m, opt.level_min - opt.refine_extra, opt.level_max + opt.refine_extra);
        r.hormander_constant = h0;
        r.passed = r.passed && std::isfinite(h1) && h1 <= h0 * (1 + opt.tol) + 1e-12;
    }
    if (!r.passed) r.detail = "derivative sup grows under refinement";
    return r;
}

// max over random band-limited f of ||F^-1(m Ff)||_p / ||f||_p.
inline double empirical_multiplier_norm(const SymbolSpec& m, double p, int trials, const GridSpec& grid,
                                        std::uint64_t seed) {
    if (!(p > 1)) throw Error(Errc::argument_range, "p must exceed 1");
    grid.validate();
    const MultTable tab = symbol_table(m, 0.0, grid);
    std::vector<double> ratios(trials, 0.0);
    parallel_for(std::size_t(trials), [&](std::size_t tr) {
        NormalStream rng(seed, stream_id(purpose::multiplier, tr));
        for (;;) {
            Field f(grid, 1);
            int idx[3];
            for (std::size_t q = 0; q < grid.size(); ++q) {
                grid.unflatten(q, idx);
                bool band = true;
                for (int a = 0; a < grid.d; ++a) band = band && std::abs(grid.wavenumber(idx[a])) <= grid.n / 4;
                const double re = rng.next(), im = rng.next();
                if (band) f.values[q] = cplx(re, im);
            }
            f = inverse_transform(f);
            const double den = lp_norm(f, p);
            if (!(den > 0)) continue;
            ratios[tr] = lp_norm(apply_table(tab, f), p) / den;
            break;
        }
    });
    return *std::max_element(ratios.begin(), ratios.end());
}

}  // namespace spdelab
