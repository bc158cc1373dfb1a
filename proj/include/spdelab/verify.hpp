#pragma once
// Ratio checkers for the inequalities: maximal, Littlewood-Paley, Bessel-norm
// equivalence, the G operator, kernel envelopes and the a-priori estimate.
// Constants are never known, so each check reports lhs / rhs on a ladder of
// grids and passes when the ratio is finite and does not drift.

#include <map>

#include "malliavin.hpp"
#include "solver.hpp"
#include "symbols.hpp"

namespace spdelab {

struct RatioReport {
    std::string name;
    double lhs = 0;
    std::vector<double> rhs_components;
    double ratio = 0;
    std::vector<std::pair<int, double>> refinement_trace;
    double drift = 0;  // max relative change between consecutive levels
    bool passed = false;
    std::uint64_t seed = 0;
    int n_samples = 0;
    std::map<std::string, double> extras;
    std::string detail;

    double rhs() const {
        double s = 0;
        for (double v : rhs_components) s += v;
        return s;
    }
};

inline constexpr double drift_limit = 0.25;

inline double trace_drift(const std::vector<std::pair<int, double>>& tr) {
    double d = 0;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        const double a = tr[i - 1].second, b = tr[i].second;
        if (a == 0 && b == 0) continue;
        d = std::max(d, std::abs(b - a) / std::max(std::abs(a), std::abs(b)));
    }
    return d;
}

inline double guarded_ratio(double lhs, double rhs) {
    if (lhs == 0 && rhs == 0) return 0.0;
    if (rhs == 0) return std::numeric_limits<double>::infinity();
    return lhs / rhs;
}

// Sets ratio, drift and passed from lhs, rhs_components and the trace.
inline void finish(RatioReport& r) {
    const double rhs = r.rhs();
    r.ratio = guarded_ratio(r.lhs, rhs);
    r.drift = trace_drift(r.refinement_trace);
    if (r.lhs == 0 && rhs == 0) {
        r.passed = true;
        r.detail = "trivial: both sides vanish";
        return;
    }
    bool finite = std::isfinite(r.ratio) && std::isfinite(r.lhs);
    for (auto& [lvl, v] : r.refinement_trace) finite = finite && std::isfinite(v);
    r.passed = finite && r.drift < drift_limit;
    if (!finite) r.detail = "inconclusive: non-finite estimate";
    else if (!r.passed) r.detail = "ratio drifts across refinements";
}

// ---------------------------------------------------------------- batteries

struct StepCase {
    std::string name;
    StepFunction h;
    QSpec q;
};

// Four step functions used for the Wiener-integral and Skorohod batteries.
inline std::vector<StepCase> standard_step_battery() {
    return {
        {"unit", StepFunction::indicator(0.0, 1.0, {1.0}), QSpec{{1.0}}},
        {"middle", StepFunction::indicator(0.25, 0.75, {2.0}), QSpec{{1.0}}},
        {"three_piece", StepFunction({0.0, 0.3, 0.6, 1.0}, 1, {1.0, -0.5, 2.0}), QSpec{{1.0}}},
        {"two_mode", StepFunction({0.0, 0.5, 1.0}, 2, {1.0, 0.5, -1.0, 1.0}), QSpec{{1.0, 0.5}}},
    };
}

struct ProcessCase {
    std::string name;
    ElementaryProcess u;
    QSpec q;
};

inline std::vector<ProcessCase> standard_process_battery(const CovarianceKernel& k) {
    std::vector<ProcessCase> out;
    const auto unit = StepFunction::indicator(0.0, 1.0, {1.0});
    {
        ElementaryProcess u;
        u.terms.push_back({CylinderFunctional::constant(1.0, unit), {1.0}, unit});
        out.push_back({"deterministic", u, QSpec{{1.0}}});
    }
    {
        const auto phi = unit.scaled(1.0 / norm_H_U0(unit, k));
        ElementaryProcess u;
        u.terms.push_back({CylinderFunctional::linear(phi), {1.0}, phi});
        out.push_back({"exact", u, QSpec{{1.0}}});
    }
    {
        ElementaryProcess u;
        u.m = 2;
        u.terms.push_back({CylinderFunctional::sine(StepFunction::indicator(0.0, 0.5, {1.0})), {1.0, 0.5},
                           StepFunction::indicator(0.25, 1.0, {1.0})});
        out.push_back({"sine", u, QSpec{{1.0}}});
    }
    {
        ElementaryProcess u;
        u.terms.push_back({CylinderFunctional::polynomial({0.0, 0.0, 1.0}, StepFunction::indicator(0.0, 0.5, {1.0})),
                           {1.0}, StepFunction::indicator(0.0, 0.5, {1.0})});
        u.terms.push_back({CylinderFunctional::exp_neg_square(StepFunction::indicator(0.3, 0.8, {1.0})), {1.0},
                           StepFunction::indicator(0.5, 1.0, {-1.0})});
        out.push_back({"two_term", u, QSpec{{1.0}}});
    }
    return out;
}

// ---------------------------------------------------------------- maximal inequality

// MC estimate of E max_m ||delta(u 1_{[0,t_m]})||^p over the given nodes plus
// u's breakpoints.  Partial integrals come from cumulative cell sums of one
// set of grid increments.
inline Moments maximal_lhs(const ElementaryProcess& u, const CovarianceKernel& k, std::vector<double> nodes,
                           double p, int n_samples, std::uint64_t seed) {
    u.validate();
    for (const auto& t : u.terms) nodes.insert(nodes.end(), t.phi.breaks.begin(), t.phi.breaks.end());
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
                nodes.end());
    nodes.erase(std::remove_if(nodes.begin(), nodes.end(), [](double t) { return t <= 0; }), nodes.end());

    CompiledProcess cp(u, k, nodes);
    const auto& src = cp.noise();
    std::vector<std::size_t> at;
    for (double t : nodes) at.push_back(detail::time_index(src.grid(), t));
    const std::size_t I = u.terms.size(), E = nodes.size();
    std::vector<Eigen::MatrixXd> P;
    std::vector<std::vector<std::vector<double>>> inner(I);  // (term, node, direction)
    for (std::size_t i = 0; i < I; ++i) {
        const auto& t = u.terms[i];
        P.push_back(src.project(t.phi));
        for (double tm : nodes) {
            const StepFunction cut = t.phi.truncated(tm);
            std::vector<double> row;
            for (const auto& h : t.F.dirs) row.push_back(inner_H_U0(h, cut, k));
            inner[i].push_back(std::move(row));
        }
    }
    std::vector<double> vals(n_samples);
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        const Eigen::MatrixXd X = src.draw(seed, purpose::malliavin, s);
        const Eigen::VectorXd b = cp.betas(X);
        std::vector<Eigen::VectorXd> cum(I);
        std::vector<double> F(I);
        std::vector<std::vector<double>> dF(I);
        for (std::size_t i = 0; i < I; ++i) {
            const Eigen::RowVectorXd cs = P[i].cwiseProduct(X).colwise().sum();
            cum[i].resize(cs.size() + 1);
            cum[i](0) = 0;
            for (int c = 0; c < cs.size(); ++c) cum[i](c + 1) = cum[i](c) + cs(c);
            F[i] = cp.F(b, i);
            for (int l = 0; l < u.terms[i].F.n(); ++l) dF[i].push_back(u.terms[i].F.partial(cp.x(b, i), l));
        }
        double mx = 0;
        Eigen::VectorXd v(u.m);
        for (std::size_t e = 0; e < E; ++e) {
            v.setZero();
            for (std::size_t i = 0; i < I; ++i) {
                double c = cum[i](at[e]) * F[i];
                for (std::size_t l = 0; l < dF[i].size(); ++l) c -= dF[i][l] * inner[i][e][l];
                for (int a = 0; a < u.m; ++a) v(a) += c * u.terms[i].k[a];
            }
            mx = std::max(mx, v.norm());
        }
        vals[s] = std::pow(mx, p);
    });
    return moments(vals);
}

// E g(Y) for Y = sum_l w_l beta(h_l) ~ N(0, v), in closed form for every shape.
inline double cylinder_mean(const CylinderFunctional& F, const CovarianceKernel& k) {
    double v = 0;
    for (int a = 0; a < F.n(); ++a)
        for (int b = 0; b < F.n(); ++b) v += F.w(a) * F.w(b) * inner_H_U0(F.dirs[a], F.dirs[b], k);
    v = std::max(v, 0.0);
    switch (F.shape) {
    case Shape::polynomial: {
        double s = 0, mom = 1;  // E Y^{2j} = v^j (2j-1)!!
        for (std::size_t n = 0; n < F.coeffs.size(); n += 2) {
            s += F.coeffs[n] * mom;
            mom *= v * double(n + 1);
        }
        return s;
    }
    case Shape::exp_neg_square: return 1.0 / std::sqrt(1.0 + 2.0 * v);
    case Shape::sine: return 0.0;
    }
    return 0;
}

// (int ||E u_s||^q ds)^{p/q}
inline double mean_process_term(const ElementaryProcess& u, const CovarianceKernel& k, double p, double q_exp) {
    if (u.terms.empty()) return 0.0;
    u.validate();
    const std::size_t I = u.terms.size();
    std::vector<double> EF(I);
    for (std::size_t i = 0; i < I; ++i) EF[i] = cylinder_mean(u.terms[i].F, k);
    std::vector<const StepFunction*> ph;
    for (const auto& t : u.terms) ph.push_back(&t.phi);
    const auto br = detail::merged_breaks(ph);
    const int J = u.J();
    double acc = 0;
    std::vector<double> buf(std::size_t(u.m) * J);
    for (std::size_t a = 0; a + 1 < br.size(); ++a) {
        const double mid = 0.5 * (br[a] + br[a + 1]);
        std::fill(buf.begin(), buf.end(), 0.0);
        for (std::size_t i = 0; i < I; ++i) {
            const auto v = u.terms[i].phi.value(mid);
            for (int c = 0; c < u.m; ++c)
                for (int j = 0; j < J; ++j) buf[std::size_t(c) * J + j] += EF[i] * u.terms[i].k[c] * v[j];
        }
        double s2 = 0;
        for (double b : buf) s2 += b * b;
        acc += std::pow(std::sqrt(s2), q_exp) * (br[a + 1] - br[a]);
    }
    return std::pow(acc, p / q_exp);
}

inline RatioReport maximal_inequality_check(const ElementaryProcess& u, const CovarianceKernel& k, const QSpec& q,
                                            double p, double q_exp, int n_samples, std::uint64_t seed,
                                            const std::vector<int>& levels = {16, 32, 64}) {
    q.validate();
    if (!u.terms.empty() && u.J() != q.J()) throw Error(Errc::shape_mismatch, "process J differs from QSpec");
    if (!(p >= q_exp && q_exp >= std::max(2.0, k.r_exp)))
        throw Error(Errc::hypothesis_violation, "maximal inequality needs p >= q >= max(2, r)");
    RatioReport r;
    r.name = "maximal";
    r.seed = seed;
    r.n_samples = n_samples;
    const double t1 = mean_process_term(u, k, p, q_exp);
    const D1pReport dn = d1p_norm(u, k, p, k.r_exp, n_samples, seed, q_exp);
    r.rhs_components = {t1, dn.mixed_Du};
    r.extras["mixed_u"] = dn.mixed_u;
    r.extras["abs_u"] = dn.abs_u;
    r.extras["abs_Du"] = dn.abs_Du;
    double se = 0;
    for (int nt : levels) {
        std::vector<double> nodes;
        for (int m = 1; m <= nt; ++m) nodes.push_back(k.T * double(m) / nt);
        const Moments mm = maximal_lhs(u, k, nodes, p, n_samples, seed);
        r.lhs = mm.mean;
        se = mm.se_mean;
        r.refinement_trace.emplace_back(nt, guarded_ratio(mm.mean, r.rhs()));
    }
    r.extras["lhs_se"] = se;
    finish(r);
    return r;
}

// ---------------------------------------------------------------- Littlewood-Paley

// Test function f(s, x, theta) for the LP check, theta on an n_theta grid of
// (0,1) with weight 1/n_theta.
struct LpTestFunction {
    std::function<double(double, std::span<const double>, int)> f;
    int n_theta = 1;
    double a = 0, b = 1;
};

// Smooth time cutoff on the middle half of (a,b) times Gaussian bumps in x whose
// width depends on theta.
inline LpTestFunction lp_bump(double L, double width = 0.5, int n_theta = 1, double a = 0, double b = 1) {
    LpTestFunction t;
    t.n_theta = n_theta;
    t.a = a;
    t.b = b;
    t.f = [=](double s, std::span<const double> x, int th) {
        const double y = (s - 0.5 * (a + b)) / (0.25 * (b - a));
        if (std::abs(y) >= 1) return 0.0;
        const double chi = std::exp(1.0 - 1.0 / (1.0 - y * y));
        const double w = width * (1.0 + 0.5 * th / std::max(1, n_theta));
        double r2 = 0;
        for (double xi : x) r2 += (xi - 0.5 * L) * (xi - 0.5 * L);
        return chi * std::exp(-0.5 * r2 / (w * w));
    };
    return t;
}

struct LpLevel {
    int n, n_t;
};

namespace detail {
// Both sides of the LP inequality; the inner s-integral uses cell midpoints of
// f with the exact cell integral of the weight (t-s)^{beta-1}.
inline std::pair<double, double> lp_discrete(const SymbolSpec& phi, const SymbolSpec& psi, const LpTestFunction& tf,
                                             const GridSpec& g, int n_t, double p, double q_exp, double r_exp) {
    const double h = (tf.b - tf.a) / n_t;
    const double beta = q_exp * phi.gamma / psi.gamma;
    const int Th = tf.n_theta;
    const double dth = 1.0 / Th;
    const std::size_t N = g.size();
    std::vector<double> smid(n_t);
    for (int i = 0; i < n_t; ++i) smid[i] = tf.a + (i + 0.5) * h;
    // f at cell midpoints, physical and spectral
    std::vector<std::vector<Field>> fh(n_t, std::vector<Field>(Th));
    double rhs = 0;
    for (int i = 0; i < n_t; ++i) {
        double inner = 0;
        for (int th = 0; th < Th; ++th) {
            Field f = sample_field(g, 1, [&](int, std::span<const double> x) { return tf.f(smid[i], x, th); });
            inner += dth * std::pow(lp_norm(f, p), r_exp);
            fh[i][th] = forward_transform(f);
        }
        rhs += h * std::pow(inner, p / r_exp);
    }
    const MultTable phit = symbol_table(phi, 0.0, g);
    std::vector<double> acc(N);
    double lhs = 0;
    for (int j = 1; j <= n_t; ++j) {
        const double t = tf.a + j * h;
        std::fill(acc.begin(), acc.end(), 0.0);
        std::vector<std::vector<double>> per(j, std::vector<double>(N, 0.0));
        parallel_for(std::size_t(j), [&](std::size_t i) {
            const double lo = t - (smid[i] - 0.5 * h), hi = t - (smid[i] + 0.5 * h);
            const double w = (std::pow(lo, beta) - std::pow(std::max(hi, 0.0), beta)) / beta;
            MultTable tab = evolution_table(psi, t, smid[i], g);
            for (std::size_t k = 0; k < N; ++k) tab[k] *= phit[k];
            std::vector<double> sq(N, 0.0);
            for (int th = 0; th < Th; ++th) {
                Field v = fh[i][th];
                for (std::size_t k = 0; k < N; ++k) v.values[k] *= tab[k];
                v = inverse_transform(v);
                for (std::size_t x = 0; x < N; ++x) sq[x] += dth * std::pow(std::abs(v.values[x]), r_exp);
            }
            for (std::size_t x = 0; x < N; ++x) per[i][x] = w * std::pow(sq[x], q_exp / r_exp);
        });
        for (int i = 0; i < j; ++i)
            for (std::size_t x = 0; x < N; ++x) acc[x] += per[i][x];
        double sx = 0;
        for (std::size_t x = 0; x < N; ++x) sx += std::pow(acc[x], p / q_exp);
        lhs += (j == n_t ? 0.5 : 1.0) * h * sx * g.cell();
    }
    return {std::pow(lhs, 1.0 / p), std::pow(rhs, 1.0 / p)};
}
}  // namespace detail

inline RatioReport lp_inequality_check(const SymbolSpec& phi, const SymbolSpec& psi, const LpTestFunction& tf,
                                       double p, double q_exp, double r_exp, double L = 8.0,
                                       const std::vector<LpLevel>& levels = {{32, 16}, {64, 32}, {128, 64}}) {
    if (!(q_exp >= std::max(2.0, r_exp) && p >= q_exp))
        throw Error(Errc::hypothesis_violation, "LP inequality needs q >= max(2, r) and p >= q");
    if (phi.dim != psi.dim) throw Error(Errc::shape_mismatch, "symbols live in different dimensions");
    RatioReport r;
    r.name = tf.n_theta > 1 ? "lp_banach" : "lp_scalar";
    for (const auto& lv : levels) {
        GridSpec g{phi.dim, lv.n, L};
        const auto [l, rh] = detail::lp_discrete(phi, psi, tf, g, lv.n_t, p, q_exp, r_exp);
        r.lhs = l;
        r.rhs_components = {rh};
        r.refinement_trace.emplace_back(lv.n, guarded_ratio(l, rh));
    }
    r.extras["beta"] = q_exp * phi.gamma / psi.gamma;
    finish(r);
    return r;
}

// ---------------------------------------------------------------- Bessel equivalence

struct BesselReport {
    double alpha = 0, p = 2;
    double C1_hat = 0, C2_hat = 0;
    std::vector<std::tuple<int, double, double>> refinement_trace;  // (n, C1, C2)
    double drift = 0;
    bool passed = false;
    int n_fields = 0;
};

// Real fields sum_{|k|_inf <= kmax} (a_k cos + b_k sin)(2 pi k.x / L) whose
// coefficients depend on (seed, index) only, so the same battery can be laid
// on any grid that resolves kmax.
inline std::vector<Field> bandlimited_battery(const GridSpec& g, int count, int kmax, std::uint64_t seed) {
    g.validate();
    if (2 * kmax >= g.n) throw Error(Errc::argument_range, "grid too coarse for the battery band");
    std::vector<Field> out;
    const int side = 2 * kmax + 1;
    int total = 1;
    for (int a = 0; a < g.d; ++a) total *= side;
    for (int b = 0; b < count; ++b) {
        NormalStream rng(seed, stream_id(purpose::battery, std::uint64_t(b)));
        Field f(g, 1);
        f.spectral = true;
        const double sN = std::sqrt(double(g.size()));
        for (int c = 0; c < total; ++c) {
            int kk[3], rem = c;
            for (int a = g.d - 1; a >= 0; --a) {
                kk[a] = rem % side - kmax;
                rem /= side;
            }
            const double re = rng.next(), im = rng.next();
            // keep one of each +-k pair, the other is its conjugate
            bool canonical = true;
            for (int a = 0; a < g.d; ++a) {
                if (kk[a] != 0) {
                    canonical = kk[a] > 0;
                    break;
                }
            }
            std::size_t pos = 0, neg = 0;
            for (int a = 0; a < g.d; ++a) {
                pos = pos * g.n + std::size_t((kk[a] + g.n) % g.n);
                neg = neg * g.n + std::size_t((-kk[a] + g.n) % g.n);
            }
            if (pos == neg) f.values[pos] = sN * re;
            else if (canonical) {
                f.values[pos] = sN * cplx(re, im) * 0.5;
                f.values[neg] = std::conj(f.values[pos]);
            }
        }
        f = inverse_transform(f);
        for (auto& v : f.values) v = cplx(v.real(), 0);
        out.push_back(std::move(f));
    }
    return out;
}

// ||u||_{H^{phi,alpha}} / (||u||_p + ||L_phi^{alpha/2} u||_p)
inline double bessel_sandwich_ratio(const Field& u, const SymbolSpec& phi, double alpha, double p) {
    const double a = bessel_norm(u, phi, alpha, p);
    const MultTable frac = multiplier_table(u.grid, [&](std::span<const double> xi) {
        return cplx(std::pow(std::max(phi(0.0, xi).real(), 0.0), alpha / 2.0), 0);
    });
    const double b = lp_norm(u, p) + lp_norm(apply_table(frac, u), p);
    return guarded_ratio(a, b);
}

inline BesselReport bessel_equivalence_check(const SymbolSpec& phi, double alpha, double p,
                                             const std::function<std::vector<Field>(int)>& battery,
                                             const std::vector<int>& levels = {32, 64, 128}) {
    if (alpha < 0) throw Error(Errc::argument_range, "Bessel equivalence needs alpha >= 0");
    if (!(p > 1)) throw Error(Errc::argument_range, "Bessel equivalence needs p > 1");
    BesselReport r;
    r.alpha = alpha;
    r.p = p;
    for (int n : levels) {
        const auto fields = battery(n);
        std::vector<double> ratios(fields.size());
        parallel_for(fields.size(), [&](std::size_t i) { ratios[i] = bessel_sandwich_ratio(fields[i], phi, alpha, p); });
        r.n_fields = int(fields.size());
        if (ratios.empty()) continue;
        const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
        r.C1_hat = *lo;
        r.C2_hat = *hi;
        r.refinement_trace.emplace_back(n, *lo, *hi);
    }
    std::vector<std::pair<int, double>> t1, t2;
    for (auto& [n, a, b] : r.refinement_trace) {
        t1.emplace_back(n, a);
        t2.emplace_back(n, b);
    }
    r.drift = std::max(trace_drift(t1), trace_drift(t2));
    r.passed = std::isfinite(r.C1_hat) && std::isfinite(r.C2_hat) && r.C1_hat > 0 && r.drift < drift_limit;
    return r;
}

// ---------------------------------------------------------------- G operator

// f piecewise constant in time on cells of width dt starting at s = 0.
struct SpaceTimeField {
    double dt = 0.1;
    std::vector<Field> cells;
};

// ||G f||_{L^p} / ||f||_{L^p} with G f(t) = int_{-inf}^t L_phi T_psi(t-s) f(s) ds,
// integrated exactly per mode over each cell and followed until the slowest
// nonzero mode has decayed by e^{-20}.
inline double g_operator_ratio(const SymbolSpec& phi, const SymbolSpec& psi, const SpaceTimeField& f, double p) {
    if (f.cells.empty()) return 0.0;
    const GridSpec& g = f.cells.front().grid;
    const std::size_t N = g.size();
    const int m = f.cells.front().m;
    const MultTable ph = symbol_table(phi, 0.0, g), ps = symbol_table(psi, 0.0, g);
    double slow = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < N; ++k)
        if (std::abs(ph[k]) > 0) slow = std::min(slow, -ps[k].real());
    if (!(slow > 0)) throw Error(Errc::hypothesis_violation, "psi must be dissipative on the support of phi");
    const double dt = f.dt;
    const int tail = int(std::ceil(20.0 / (slow * dt)));
    MultTable e(N), w(N);
    for (std::size_t k = 0; k < N; ++k) {
        e[k] = std::exp(ps[k] * dt);
        w[k] = std::abs(ps[k]) > 0 ? ph[k] * (e[k] - 1.0) / ps[k] : ph[k] * dt;
    }
    Field G(g, m);
    G.spectral = true;
    double num = 0, den = 0, prev = 0;
    const int total = int(f.cells.size()) + tail;
    for (int c = 0; c < total; ++c) {
        const bool in = c < int(f.cells.size());
        Field fh;
        if (in) {
            f.cells[c].check_same(G);
            den += dt * std::pow(lp_norm(f.cells[c], p), p);
            fh = forward_transform(f.cells[c]);
        }
        for (int a = 0; a < m; ++a)
            for (std::size_t k = 0; k < N; ++k) {
                G.at(a, k) *= e[k];
                if (in) G.at(a, k) += w[k] * fh.at(a, k);
            }
        const double cur = std::pow(lp_norm(inverse_transform(G), p), p);
        num += 0.5 * dt * (prev + cur);
        prev = cur;
    }
    return guarded_ratio(std::pow(num, 1.0 / p), std::pow(den, 1.0 / p));
}

// Battery of separable fields chi(s) u(x) with random time profiles on (0, T).
inline std::vector<SpaceTimeField> g_operator_battery(const GridSpec& g, int n_t, double T, int count,
                                                      std::uint64_t seed) {
    const auto us = bandlimited_battery(g, count, std::min(8, g.n / 2 - 1), seed);
    std::vector<SpaceTimeField> out;
    for (int b = 0; b < count; ++b) {
        NormalStream rng(seed, stream_id(purpose::battery, 1000 + std::uint64_t(b)));
        const double w = 0.5 + rng.uniform(), c0 = rng.uniform();
        SpaceTimeField f;
        f.dt = T / n_t;
        for (int i = 0; i < n_t; ++i) {
            const double s = (i + 0.5) / n_t;
            Field x = us[b];
            x *= std::cos(2 * std::numbers::pi * w * s + 2 * std::numbers::pi * c0) + 0.5;
            f.cells.push_back(std::move(x));
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline RatioReport g_operator_check(const SymbolSpec& phi, const SymbolSpec& psi,
                                    const std::function<std::vector<SpaceTimeField>(int)>& battery, double p,
                                    const std::vector<int>& levels = {32, 64, 128}) {
    if (std::abs(phi.gamma - psi.gamma) > 1e-12 * std::max(phi.gamma, psi.gamma))
        throw Error(Errc::hypothesis_violation, "G operator bound assumes gamma_phi = gamma_psi");
    if (psi.time_dependent) throw Error(Errc::unsupported_parameter, "G operator check needs a time-independent psi");
    RatioReport r;
    r.name = "g_operator";
    for (int lv : levels) {
        const auto fs = battery(lv);
        std::vector<double> ratios(fs.size(), 0.0);
        for (std::size_t i = 0; i < fs.size(); ++i) ratios[i] = g_operator_ratio(phi, psi, fs[i], p);
        const double mx = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
        r.lhs = mx;
        r.rhs_components = {fs.empty() ? 0.0 : 1.0};
        r.refinement_trace.emplace_back(lv, mx);
    }
    r.n_samples = 0;
    finish(r);
    return r;
}

// ---------------------------------------------------------------- kernel envelope

struct EnvelopeBound {
    std::string name;
    double exponent = 0;       // a in min(|x|^{-a}, tau^{-a/gamma_psi})
    std::vector<double> C;     // fitted constant per tau
    double variation = 0;      // max C / min C - 1
};

struct EnvelopeReport {
    std::vector<double> taus;
    std::vector<EnvelopeBound> bounds;
    std::vector<double> sup_values;   // sup |L_phi p_psi| per tau
    double scaling_measured = 0;      // sup at 2 tau / sup at tau, first such pair
    double scaling_expected = 0;
    double tail_slope = 0;            // log-log slope of |K| in the far field (first tau)
    double tail_required = 0;         // -(gamma_phi + d)
    bool passed = false;
    std::string detail;
};

inline constexpr double envelope_variation_limit = 0.2;
inline constexpr double tail_slope_tolerance = 0.15;

inline EnvelopeReport kernel_envelope_check(const SymbolSpec& phi, const SymbolSpec& psi, std::vector<double> taus,
                                            const GridSpec& g, double s0 = 1.0) {
    g.validate();
    if (taus.empty()) throw Error(Errc::argument_range, "need at least one t - s");
    for (double t : taus)
        if (!(t > 0)) throw Error(Errc::ordering, "t - s must be positive");
    const int d = g.d;
    const double gp = phi.gamma, gs = psi.gamma;
    EnvelopeReport r;
    r.taus = taus;
    r.bounds = {{"K", gp + d, {}, 0}, {"grad_K", gp + 1 + d, {}, 0}, {"ds_K", gp + gs + d, {}, 0}};
    const MultTable ph = symbol_table(phi, 0.0, g);
    const std::size_t N = g.size();

    // |values| as a d-vector norm per grid point
    auto kernel = [&](const MultTable& tab) { return kernel_from_table(tab, g); };
    std::vector<double> first_K;
    for (double tau : taus) {
        const double t = s0 + tau;
        MultTable base = evolution_table(psi, t, s0, g);
        for (std::size_t k = 0; k < N; ++k) base[k] *= ph[k];
        std::vector<double> vK(N), vG(N, 0.0), vS(N);
        const Field K = kernel(base);
        for (std::size_t x = 0; x < N; ++x) vK[x] = std::abs(K.values[x]);
        for (int a = 0; a < d; ++a) {
            const MultTable ga = multiplier_table(g, [&](std::span<const double> xi) { return cplx(0, xi[a]); });
            MultTable tab(N);
            for (std::size_t k = 0; k < N; ++k) tab[k] = base[k] * ga[k];
            const Field Ga = kernel(tab);
            for (std::size_t x = 0; x < N; ++x) vG[x] += std::norm(Ga.values[x]);
        }
        for (auto& v : vG) v = std::sqrt(v);
        const double h = 1e-4 * tau;
        MultTable up = evolution_table(psi, t, s0 + h, g), dn = evolution_table(psi, t, s0 - h, g);
        MultTable ds(N);
        for (std::size_t k = 0; k < N; ++k) ds[k] = ph[k] * (up[k] - dn[k]) / (2 * h);
        const Field S = kernel(ds);
        for (std::size_t x = 0; x < N; ++x) vS[x] = std::abs(S.values[x]);

        const std::vector<double>* vals[3] = {&vK, &vG, &vS};
        double xo[3];
        for (int b = 0; b < 3; ++b) {
            const double a = r.bounds[b].exponent;
            const double cap = std::pow(tau, -a / gs);
            double C = 0;
            for (std::size_t x = 0; x < N; ++x) {
                g.offset(x, xo);
                double rad = 0;
                for (int c = 0; c < d; ++c) rad += xo[c] * xo[c];
                rad = std::sqrt(rad);
                if (rad > g.L / 4) continue;
                const double env = rad > 0 ? std::min(std::pow(rad, -a), cap) : cap;
                C = std::max(C, (*vals[b])[x] / env);
            }
            r.bounds[b].C.push_back(C);
        }
        r.sup_values.push_back(*std::max_element(vK.begin(), vK.end()));
        if (first_K.empty()) first_K = vK;
    }
    bool ok = true;
    for (auto& b : r.bounds) {
        const auto [lo, hi] = std::minmax_element(b.C.begin(), b.C.end());
        b.variation = *lo > 0 ? *hi / *lo - 1.0 : std::numeric_limits<double>::infinity();
        ok = ok && std::isfinite(b.variation) && b.variation < envelope_variation_limit;
    }
    r.scaling_expected = std::pow(2.0, -(gp + d) / gs);
    r.scaling_measured = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < taus.size() && std::isnan(r.scaling_measured); ++i)
        for (std::size_t j = 0; j < taus.size(); ++j)
            if (std::abs(taus[j] - 2 * taus[i]) < 1e-12 * taus[i]) {
                r.scaling_measured = r.sup_values[j] / r.sup_values[i];
                break;
            }
    // far-field slope on |x| in [L/16, L/4] where the kernel is above the FFT floor
    const double floor = 1e-10 * *std::max_element(first_K.begin(), first_K.end());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    double xo[3];
    for (std::size_t x = 0; x < N; ++x) {
        g.offset(x, xo);
        double rad = 0;
        for (int c = 0; c < d; ++c) rad += xo[c] * xo[c];
        rad = std::sqrt(rad);
        if (rad < g.L / 16 || rad > g.L / 4 || first_K[x] <= floor) continue;
        const double lx = std::log(rad), ly = std::log(first_K[x]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++cnt;
    }
    r.tail_required = -(gp + d);
    if (cnt >= 3) {
        r.tail_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    } else {
        // kernel is below the floor over the whole far field: decay is faster than any power we can see
        r.tail_slope = -std::numeric_limits<double>::infinity();
    }
    const bool tail_ok = r.tail_slope <= r.tail_required * (1 - tail_slope_tolerance);
    r.passed = ok && tail_ok;
    if (!ok) r.detail = "fitted constants vary across t - s";
    else if (!tail_ok) r.detail = "far field decays slower than the envelope";
    return r;
}

// ---------------------------------------------------------------- a-priori estimate

namespace detail {
inline Field flatten(const OperatorField& g) {
    Field f(g.grid, g.m * g.J);
    std::copy(g.values.begin(), g.values.end(), f.values.begin());
    return f;
}
inline double trapezoid(const std::vector<double>& v, double h) {
    double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i == 0 || i + 1 == v.size() ? 0.5 : 1.0) * h * v[i];
    return s;
}
}  // namespace detail

struct AprioriTerms {
    double u_norm = 0, Du_norm = 0, Su_norm = 0, u0_norm = 0;  // the four solution-space summands
    double f_norm = 0;                                          // data norm of f
    double u_se = 0, Du_se = 0;                                 // SE of the p-th powers
};

// Solution-space norm pieces for one problem at s = 0, beta = 2 gamma_psi / gamma_phi.
inline AprioriTerms apriori_terms(const SPDEProblem& pb, int n_samples, std::uint64_t seed, Estimator est) {
    pb.validate();
    const double p = pb.p;
    const double beta = 2.0 * pb.psi.gamma / pb.phi.gamma;
    const std::size_t nt = pb.times.size();
    const double h = pb.times[1] - pb.times[0];
    const GridSpec& g = pb.grid();
    const MultTable lift = bessel_table(pb.phi, beta, g);
    std::vector<MultTable> psit;
    for (double t : pb.times) psit.push_back(symbol_table(pb.psi, pb.psi.time_dependent ? t : 0.0, g));
    std::vector<double> a(n_samples), b(n_samples);
    for_each_sample(pb, n_samples, seed, est, [&](std::size_t s, std::vector<Field>& u, const Eigen::MatrixXd&) {
        std::vector<double> ua(nt), ub(nt);
        for (std::size_t m = 0; m < nt; ++m) {
            Field uh = forward_transform(u[m]);
            Field l = uh, w = uh;
            for (int c = 0; c < uh.m; ++c)
                for (std::size_t k = 0; k < uh.npts(); ++k) {
                    l.at(c, k) *= lift[k];
                    w.at(c, k) *= psit[m][k];
                }
            ua[m] = std::pow(lp_norm(inverse_transform(l), p), p);
            Field Du = inverse_transform(w);
            if (!pb.f.empty()) Du += pb.f[m];
            ub[m] = std::pow(lp_norm(Du, p), p);
        }
        a[s] = detail::trapezoid(ua, h);
        b[s] = detail::trapezoid(ub, h);
    });
    AprioriTerms r;
    const auto ma = moments(a), mb = moments(b);
    r.u_norm = std::pow(ma.mean, 1.0 / p);
    r.Du_norm = std::pow(mb.mean, 1.0 / p);
    r.u_se = ma.se_mean;
    r.Du_se = mb.se_mean;
    // g is deterministic, so its 1,p norm has no derivative part; steps are (t_{m-1}, t_m]
    const double qc = conj_exp(pb.q_exp);
    double sg = 0;
    for (const auto& gi : pb.g) sg += h * std::pow(bessel_norm(detail::flatten(gi), pb.phi, beta / qc, p), p);
    r.Su_norm = std::pow(sg, 1.0 / p);
    r.u0_norm = bessel_norm(pb.u0, pb.phi, beta * (1.0 - 1.0 / p), p);
    if (!pb.f.empty()) {
        std::vector<double> fv;
        for (const auto& f : pb.f) fv.push_back(std::pow(lp_norm(f, p), p));
        r.f_norm = std::pow(detail::trapezoid(fv, h), 1.0 / p);
    }
    return r;
}

inline RatioReport apriori_estimate_check(const std::function<SPDEProblem(int n, int n_t)>& make_problem,
                                          int n_samples, std::uint64_t seed,
                                          const std::vector<LpLevel>& levels = {{32, 16}, {64, 32}, {128, 64}},
                                          Estimator est = Estimator::modewise) {
    RatioReport r;
    r.name = "apriori";
    r.seed = seed;
    r.n_samples = n_samples;
    for (const auto& lv : levels) {
        const SPDEProblem pb = make_problem(lv.n, lv.n_t);
        const AprioriTerms t = apriori_terms(pb, n_samples, seed, est);
        r.lhs = t.u_norm + t.Du_norm + t.Su_norm + t.u0_norm;
        r.rhs_components = {t.u0_norm, t.f_norm, t.Su_norm};
        r.extras["u_norm"] = t.u_norm;
        r.extras["Du_norm"] = t.Du_norm;
        r.extras["Su_norm"] = t.Su_norm;
        r.extras["u0_norm"] = t.u0_norm;
        r.extras["f_norm"] = t.f_norm;
        r.refinement_trace.emplace_back(lv.n, guarded_ratio(r.lhs, r.rhs()));
    }
    finish(r);
    return r;
}

}  // namespace spdelab
