#pragma once
// Cylinder functionals with closed-form gradients, Malliavin derivatives,
// Skorohod integrals of elementary processes and the isometry check.

#include "gaussian.hpp"

namespace spdelab {

enum class Shape { polynomial, exp_neg_square, sine };

// F = f(beta(h_1), ..., beta(h_n)) with f(x) = g(sum_l w_l x_l) and g one of
// the shapes (polynomial coefficients are in increasing degree).
struct CylinderFunctional {
    Shape shape = Shape::polynomial;
    std::vector<double> coeffs{0.0, 1.0};
    std::vector<StepFunction> dirs;
    std::vector<double> weights;  // empty means all ones

    int n() const { return int(dirs.size()); }
    double w(int l) const { return weights.empty() ? 1.0 : weights[l]; }

    double y(const double* x) const {
        double s = 0;
        for (int l = 0; l < n(); ++l) s += w(l) * x[l];
        return s;
    }
    double g(double t) const {
        switch (shape) {
        case Shape::polynomial: {
            double v = 0;
            for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * t + *it;
            return v;
        }
        case Shape::exp_neg_square: return std::exp(-t * t);
        case Shape::sine: return std::sin(t);
        }
        return 0;
    }
    double dg(double t) const {
        switch (shape) {
        case Shape::polynomial: {
            double v = 0;
            for (std::size_t k = coeffs.size(); k-- > 1;) v = v * t + double(k) * coeffs[k];
            return v;
        }
        case Shape::exp_neg_square: return -2.0 * t * std::exp(-t * t);
        case Shape::sine: return std::cos(t);
        }
        return 0;
    }
    double value(const double* x) const { return g(y(x)); }
    // d f / d x_l
    double partial(const double* x, int l) const { return w(l) * dg(y(x)); }
    bool deterministic() const {
        return shape == Shape::polynomial && coeffs.size() <= 1;
    }

    static CylinderFunctional polynomial(std::vector<double> c, StepFunction h) {
        return {Shape::polynomial, std::move(c), {std::move(h)}, {}};
    }
    static CylinderFunctional linear(StepFunction h) { return polynomial({0.0, 1.0}, std::move(h)); }
    static CylinderFunctional constant(double c, StepFunction h) { return polynomial({c}, std::move(h)); }
    static CylinderFunctional exp_neg_square(StepFunction h) { return {Shape::exp_neg_square, {}, {std::move(h)}, {}}; }
    static CylinderFunctional sine(StepFunction h) { return {Shape::sine, {}, {std::move(h)}, {}}; }
};

// D F = sum_l coefficient_l * h_l; coefficients are evaluated per draw.
struct MalliavinDerivative {
    const CylinderFunctional* F;
    const std::vector<StepFunction>& directions() const { return F->dirs; }
    std::vector<double> coefficients(const double* x) const {
        std::vector<double> c(F->n());
        for (int l = 0; l < F->n(); ++l) c[l] = F->partial(x, l);
        return c;
    }
};

inline MalliavinDerivative malliavin_derivative(const CylinderFunctional& F) { return {&F}; }

// D_phi F = sum_l d_l f * <h_l, phi>, with the inner products fixed up front.
struct DPhi {
    const CylinderFunctional* F;
    std::vector<double> inner;
    double operator()(const double* x) const {
        double s = 0;
        for (int l = 0; l < F->n(); ++l) s += F->partial(x, l) * inner[l];
        return s;
    }
};

inline DPhi d_phi(const CylinderFunctional& F, const StepFunction& phi, const CovarianceKernel& k) {
    DPhi d{&F, {}};
    for (const auto& h : F.dirs) d.inner.push_back(inner_H_U0(h, phi, k));
    return d;
}

struct ElementaryTerm {
    CylinderFunctional F;
    std::vector<double> k;  // vector in K = R^m
    StepFunction phi;
};

struct ElementaryProcess {
    int m = 1;
    std::vector<ElementaryTerm> terms;
    int J() const { return terms.empty() ? 1 : terms.front().phi.J; }
    void validate() const {
        for (const auto& t : terms) {
            if (int(t.k.size()) != m) throw Error(Errc::shape_mismatch, "term vector k has wrong dimension");
            if (t.F.n() < 1) throw Error(Errc::shape_mismatch, "cylinder functional needs a direction");
            if (t.phi.J != J()) throw Error(Errc::shape_mismatch, "terms live in different U_0 truncations");
            for (const auto& h : t.F.dirs)
                if (h.J != J()) throw Error(Errc::shape_mismatch, "direction J mismatch");
        }
    }
};

// Flattened view: every beta(.) the process needs, as linear images of one
// set of grid increments (so their joint law is exact).
class CompiledProcess {
public:
    CompiledProcess(const ElementaryProcess& u, const CovarianceKernel& k, const std::vector<double>& extra_grid = {})
        : u_(u) {
        u.validate();
        std::vector<double> grid = extra_grid;
        for (const auto& t : u.terms) {
            grid.insert(grid.end(), t.phi.breaks.begin(), t.phi.breaks.end());
            for (const auto& h : t.F.dirs) grid.insert(grid.end(), h.breaks.begin(), h.breaks.end());
        }
        noise_ = std::make_unique<IncrementSource>(grid, u.J(), k);
        for (const auto& t : u.terms) {
            offset_.push_back(int(proj_.size()));
            for (const auto& h : t.F.dirs) proj_.push_back(noise_->project(h));
            phi_index_.push_back(int(proj_.size()));
            proj_.push_back(noise_->project(t.phi));
        }
        for (std::size_t i = 0; i < u.terms.size(); ++i) dphi_.push_back(d_phi(u.terms[i].F, u.terms[i].phi, k));
    }
    const IncrementSource& noise() const { return *noise_; }
    Eigen::VectorXd betas(const Eigen::MatrixXd& X) const {
        Eigen::VectorXd b(proj_.size());
        for (std::size_t a = 0; a < proj_.size(); ++a) b(a) = proj_[a].cwiseProduct(X).sum();
        return b;
    }
    Eigen::VectorXd draw(std::uint64_t seed, std::uint64_t sample) const {
        return betas(noise_->draw(seed, purpose::malliavin, sample));
    }
    const ElementaryProcess& process() const { return u_; }
    const double* x(const Eigen::VectorXd& draw, std::size_t i) const { return draw.data() + offset_[i]; }
    double beta_phi(const Eigen::VectorXd& draw, std::size_t i) const { return draw(phi_index_[i]); }
    double F(const Eigen::VectorXd& draw, std::size_t i) const { return u_.terms[i].F.value(x(draw, i)); }
    double DphiF(const Eigen::VectorXd& draw, std::size_t i) const { return dphi_[i](x(draw, i)); }

    // delta(u) = sum_i [beta(phi_i) F_i - D_{phi_i} F_i] k_i
    Eigen::VectorXd skorohod(const Eigen::VectorXd& draw) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(u_.m);
        for (std::size_t i = 0; i < u_.terms.size(); ++i) {
            const double c = beta_phi(draw, i) * F(draw, i) - DphiF(draw, i);
            for (int a = 0; a < u_.m; ++a) out(a) += c * u_.terms[i].k[a];
        }
        return out;
    }

private:
    const ElementaryProcess& u_;
    std::unique_ptr<IncrementSource> noise_;
    std::vector<Eigen::MatrixXd> proj_;
    std::vector<int> offset_, phi_index_;
    std::vector<DPhi> dphi_;
};

// n_samples x m, row-major
inline std::vector<double> skorohod_elementary(const ElementaryProcess& u, const CovarianceKernel& k, const QSpec& q,
                                               int n_samples, std::uint64_t seed) {
    q.validate();
    if (!u.terms.empty() && u.J() != q.J()) throw Error(Errc::shape_mismatch, "process J differs from QSpec");
    CompiledProcess cp(u, k);
    std::vector<double> out(std::size_t(n_samples) * u.m, 0.0);
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        const Eigen::VectorXd x = cp.draw(seed, s);
        const Eigen::VectorXd d = cp.skorohod(x);
        for (int a = 0; a < u.m; ++a) out[s * u.m + a] = d(a);
    });
    return out;
}

struct IsometryReport {
    double lhs = 0, rhs = 0;
    double rhs_norm_term = 0, rhs_trace_term = 0;
    double se = 0, z_score = 0;
    int n_samples = 0;
};

inline IsometryReport skorohod_moment_check(const ElementaryProcess& u, const CovarianceKernel& k, const QSpec& q,
                                            int n_samples, std::uint64_t seed) {
    q.validate();
    CompiledProcess cp(u, k);
    const std::size_t I = u.terms.size();
    // fixed inner products
    Eigen::MatrixXd P(I, I);
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < I; ++j) {
            double kk = 0;
            for (int a = 0; a < u.m; ++a) kk += u.terms[i].k[a] * u.terms[j].k[a];
            P(i, j) = kk * inner_H_U0(u.terms[i].phi, u.terms[j].phi, k);
        }
    // <D u, S D u> weights over (term, direction) pairs through tensor_inner
    std::vector<std::pair<std::size_t, int>> idx;
    for (std::size_t i = 0; i < I; ++i)
        for (int l = 0; l < u.terms[i].F.n(); ++l) idx.emplace_back(i, l);
    Eigen::MatrixXd W(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto& ta = u.terms[idx[a].first];
            const auto& tb = u.terms[idx[b].first];
            double kk = 0;
            for (int c = 0; c < u.m; ++c) kk += ta.k[c] * tb.k[c];
            if (kk == 0) {
                W(a, b) = 0;
                continue;
            }
            const auto lhsT = TwoParamStep::outer(ta.phi, ta.F.dirs[idx[a].second]);
            const auto rhsT = TwoParamStep::outer(tb.F.dirs[idx[b].second], tb.phi);  // swapped
            W(a, b) = kk * tensor_inner(lhsT, rhsT, k);
        }

    std::vector<double> lhs(n_samples), rhs(n_samples), diff(n_samples), t1(n_samples), t2(n_samples);
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        const Eigen::VectorXd x = cp.draw(seed, s);
        const double l = cp.skorohod(x).squaredNorm();
        Eigen::VectorXd Fv(I);
        for (std::size_t i = 0; i < I; ++i) Fv(i) = cp.F(x, i);
        Eigen::VectorXd g(idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a)
            g(a) = u.terms[idx[a].first].F.partial(cp.x(x, idx[a].first), idx[a].second);
        t1[s] = Fv.dot(P * Fv);
        t2[s] = g.dot(W * g);
        lhs[s] = l;
        rhs[s] = t1[s] + t2[s];
        diff[s] = l - rhs[s];
    });
    IsometryReport r;
    r.n_samples = n_samples;
    r.lhs = moments(lhs).mean;
    r.rhs = moments(rhs).mean;
    r.rhs_norm_term = moments(t1).mean;
    r.rhs_trace_term = moments(t2).mean;
    const auto md = moments(diff);
    r.se = md.se_mean;
    const double gap = std::abs(md.mean);
    r.z_score = r.se > 0 ? gap / r.se : (gap < 1e-12 * (1 + std::abs(r.lhs)) ? 0.0 : std::numeric_limits<double>::infinity());
    return r;
}

struct D1pReport {
    double abs_u = 0, abs_Du = 0;      // E||u||^p_{|H|}, E||Du||^p_{|H| (x) |H|}
    double value = 0;                  // their sum
    double mixed_u = 0, mixed_Du = 0;  // E(int ||u||^q)^{p/q}, E(int (int ||D_th u_s||^r dth)^{q/r} ds)^{p/q}
    double se_abs = 0, se_mixed = 0;
    int n_samples = 0;
};

namespace detail {
inline std::vector<double> merged_breaks(const std::vector<const StepFunction*>& fs) {
    std::vector<double> b;
    for (auto* f : fs) b.insert(b.end(), f->breaks.begin(), f->breaks.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end(), [](double x, double y) { return std::abs(x - y) < 1e-14; }), b.end());
    return b;
}
inline Eigen::MatrixXd rect_matrix(const std::vector<double>& b, const CovarianceKernel& k) {
    const int n = int(b.size()) - 1;
    Eigen::MatrixXd R(std::max(n, 0), std::max(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) R(i, j) = rectangle_increment(k, b[i], b[i + 1], b[j], b[j + 1]);
    return R;
}
}  // namespace detail

// Per-draw pieces of u and D u on the merged partitions.
class ProcessNorms {
public:
    ProcessNorms(const ElementaryProcess& u, const CovarianceKernel& k) : u_(u), cp_(u, k) {
        std::vector<const StepFunction*> ph, hs;
        for (const auto& t : u.terms) {
            ph.push_back(&t.phi);
            for (const auto& h : t.F.dirs) hs.push_back(&h);
        }
        bs_ = detail::merged_breaks(ph);
        bt_ = detail::merged_breaks(hs);
        Rs_ = detail::rect_matrix(bs_, k);
        Rt_ = detail::rect_matrix(bt_, k);
    }
    const CompiledProcess& compiled() const { return cp_; }
    int ps() const { return std::max(0, int(bs_.size()) - 1); }
    int pt() const { return std::max(0, int(bt_.size()) - 1); }
    double ws(int a) const { return bs_[a + 1] - bs_[a]; }
    double wt(int c) const { return bt_[c + 1] - bt_[c]; }
    const Eigen::MatrixXd& Rs() const { return Rs_; }
    const Eigen::MatrixXd& Rt() const { return Rt_; }
    const std::vector<double>& s_breaks() const { return bs_; }

    // ||u_s|| per s-piece (Frobenius over K (x) U_0)
    Eigen::VectorXd u_norms(const Eigen::VectorXd& x) const {
        const int J = u_.J(), m = u_.m;
        Eigen::VectorXd out(ps());
        std::vector<double> buf(std::size_t(m) * J);
        for (int a = 0; a < ps(); ++a) {
            std::fill(buf.begin(), buf.end(), 0.0);
            const double mid = 0.5 * (bs_[a] + bs_[a + 1]);
            for (std::size_t i = 0; i < u_.terms.size(); ++i) {
                const auto& t = u_.terms[i];
                const auto v = t.phi.value(mid);
                const double F = cp_.F(x, i);
                for (int c = 0; c < m; ++c)
                    for (int j = 0; j < J; ++j) buf[std::size_t(c) * J + j] += F * t.k[c] * v[j];
            }
            double s = 0;
            for (double b : buf) s += b * b;
            out(a) = std::sqrt(s);
        }
        return out;
    }
    // ||D_theta u_s|| per (s-piece, theta-piece)
    Eigen::MatrixXd du_norms(const Eigen::VectorXd& x) const {
        const int J = u_.J(), m = u_.m;
        Eigen::MatrixXd out(ps(), pt());
        std::vector<double> buf(std::size_t(m) * J * J);
        for (int a = 0; a < ps(); ++a) {
            const double ms = 0.5 * (bs_[a] + bs_[a + 1]);
            for (int c = 0; c < pt(); ++c) {
                const double mt = 0.5 * (bt_[c] + bt_[c + 1]);
                std::fill(buf.begin(), buf.end(), 0.0);
                for (std::size_t i = 0; i < u_.terms.size(); ++i) {
                    const auto& t = u_.terms[i];
                    const auto v = t.phi.value(ms);
                    for (int l = 0; l < t.F.n(); ++l) {
                        const double g = t.F.partial(cp_.x(x, i), l);
                        if (g == 0) continue;
                        const auto h = t.F.dirs[l].value(mt);
                        for (int cc = 0; cc < m; ++cc)
                            for (int j = 0; j < J; ++j)
                                for (int jj = 0; jj < J; ++jj)
                                    buf[(std::size_t(cc) * J + j) * J + jj] += g * t.k[cc] * v[j] * h[jj];
                    }
                }
                double s = 0;
                for (double b : buf) s += b * b;
                out(a, c) = std::sqrt(s);
            }
        }
        return out;
    }

private:
    const ElementaryProcess& u_;
    CompiledProcess cp_;
    std::vector<double> bs_, bt_;
    Eigen::MatrixXd Rs_, Rt_;
};

inline D1pReport d1p_norm(const ElementaryProcess& u, const CovarianceKernel& k, double p, double r_exp, int n_samples,
                          std::uint64_t seed, double q_exp = 0) {
    if (p < 2) throw Error(Errc::argument_range, "d1p_norm needs p >= 2");
    if (q_exp <= 0) q_exp = p;
    D1pReport r;
    r.n_samples = n_samples;
    if (u.terms.empty()) return r;
    ProcessNorms pn(u, k);
    std::vector<double> a(n_samples), b(n_samples), c(n_samples), d(n_samples), sab(n_samples), scd(n_samples);
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        const Eigen::VectorXd x = pn.compiled().draw(seed, s);
        const Eigen::VectorXd un = pn.u_norms(x);
        const Eigen::MatrixXd dn = pn.du_norms(x);
        const double hu = std::sqrt(std::max(0.0, un.dot(pn.Rs() * un)));
        const double hd = pn.pt() ? std::sqrt(std::max(0.0, (pn.Rs().cwiseProduct(dn * pn.Rt() * dn.transpose())).sum())) : 0.0;
        double iu = 0, id = 0;
        for (int i = 0; i < pn.ps(); ++i) {
            iu += std::pow(un(i), q_exp) * pn.ws(i);
            double inner = 0;
            for (int j = 0; j < pn.pt(); ++j) inner += std::pow(dn(i, j), r_exp) * pn.wt(j);
            id += std::pow(inner, q_exp / r_exp) * pn.ws(i);
        }
        a[s] = std::pow(hu, p);
        b[s] = std::pow(hd, p);
        c[s] = std::pow(iu, p / q_exp);
        d[s] = std::pow(id, p / q_exp);
        sab[s] = a[s] + b[s];
        scd[s] = c[s] + d[s];
    });
    r.abs_u = moments(a).mean;
    r.abs_Du = moments(b).mean;
    r.value = r.abs_u + r.abs_Du;
    r.mixed_u = moments(c).mean;
    r.mixed_Du = moments(d).mean;
    r.se_abs = moments(sab).se_mean;
    r.se_mixed = moments(scd).se_mean;
    return r;
}

}  // namespace spdelab
