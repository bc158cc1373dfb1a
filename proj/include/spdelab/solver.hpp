#pragma once
// Mild solution u = T(t,0)u0 + int T(t,s) f ds + int T(t,s) g dbeta on the
// periodic grid, with a modewise and a pathwise stochastic convolution.

#include "gaussian.hpp"
#include "spectral.hpp"

namespace spdelab {

enum class Estimator { modewise, pathwise };

inline const char* estimator_name(Estimator e) { return e == Estimator::modewise ? "modewise" : "pathwise"; }

struct SPDEProblem {
    SymbolSpec psi;
    SymbolSpec phi;
    Field u0;
    std::vector<Field> f;          // at each solution time, or empty for f = 0
    std::vector<OperatorField> g;  // on each step (t_{m-1}, t_m], or empty for g = 0
    CovarianceKernel kernel;
    QSpec q;
    std::vector<double> times;  // uniform, times[0] = 0
    double p = 2, q_exp = 2, r_exp = 2;
    int refine = 8;  // fine pieces per solution step in the stochastic convolution

    const GridSpec& grid() const { return u0.grid; }
    int m() const { return u0.m; }
    int steps() const { return int(times.size()) - 1; }

    void validate() const {
        check_field(u0);
        check_increasing(times);
        if (times.size() < 2 || times.front() != 0.0) throw Error(Errc::grid_mismatch, "solution times must start at 0");
        const double dt = times[1] - times[0];
        for (std::size_t i = 1; i < times.size(); ++i)
            if (std::abs(times[i] - times[i - 1] - dt) > 1e-9 * dt) throw Error(Errc::grid_mismatch, "solution grid must be uniform");
        if (times.back() > kernel.T * (1 + 1e-12)) throw Error(Errc::argument_range, "solution horizon exceeds kernel T");
        if (!f.empty()) {
            if (f.size() != times.size()) throw Error(Errc::grid_mismatch, "f needs one field per solution time");
            for (const auto& x : f) x.check_same(u0);
        }
        if (!g.empty()) {
            if (int(g.size()) != steps()) throw Error(Errc::grid_mismatch, "g needs one operator field per step");
            for (const auto& x : g)
                if (!(x.grid == grid()) || x.m != m() || x.J != q.J())
                    throw Error(Errc::shape_mismatch, "g does not match grid, K or QSpec");
        }
        q.validate();
        if (refine < 1) throw Error(Errc::argument_range, "refine must be >= 1");
        if (!(p >= q_exp && q_exp >= std::max(2.0, r_exp)))
            throw Error(Errc::hypothesis_violation, "exponents need p >= q >= max(2, r)");
    }
};

inline std::vector<double> uniform_times(double T, int steps) {
    std::vector<double> t(steps + 1);
    for (int i = 0; i <= steps; ++i) t[i] = T * double(i) / steps;
    return t;
}

// Psi(t) = int_0^t psi(r, xi) dr at increasing times ts (ts[0] >= 0).
inline std::vector<MultTable> cumulative_exponent(const SymbolSpec& psi, const GridSpec& g,
                                                  const std::vector<double>& ts) {
    std::vector<MultTable> out;
    if (!psi.time_dependent) {
        const MultTable base = symbol_table(psi, 0.0, g);
        for (double t : ts) {
            MultTable m(base.size());
            for (std::size_t k = 0; k < m.size(); ++k) m[k] = t * base[k];
            out.push_back(std::move(m));
        }
        return out;
    }
    MultTable acc(g.size(), cplx(0));
    double prev = 0;
    for (double t : ts) {
        if (t > prev) {
            const double h = g.dt_quad > 0 ? g.dt_quad : (t - prev) / 64.0;
            const MultTable inc = multiplier_table(g, [&](std::span<const double> xi) {
                return simpson([&](double r) { return psi(r, xi); }, prev, t, h);
            });
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += inc[k];
            prev = t;
        }
        out.push_back(acc);
    }
    return out;
}

inline std::vector<Field> deterministic_homogeneous(const SPDEProblem& pb) {
    pb.validate();
    const Field u0h = forward_transform(pb.u0);
    const auto Psi = cumulative_exponent(pb.psi, pb.grid(), pb.times);
    std::vector<Field> out;
    for (std::size_t m = 0; m < pb.times.size(); ++m) {
        if (m == 0) {
            out.push_back(pb.u0);
            continue;
        }
        Field v = u0h;
        for (int c = 0; c < v.m; ++c)
            for (std::size_t k = 0; k < v.npts(); ++k) v.at(c, k) *= std::exp(Psi[m][k]);
        out.push_back(inverse_transform(v));
    }
    return out;
}

inline std::vector<Field> deterministic_forced(const SPDEProblem& pb) {
    pb.validate();
    const std::size_t nt = pb.times.size();
    std::vector<Field> out(nt, Field(pb.grid(), pb.m()));
    if (pb.f.empty()) return out;
    const auto Psi = cumulative_exponent(pb.psi, pb.grid(), pb.times);
    std::vector<Field> fh;
    for (const auto& x : pb.f) fh.push_back(forward_transform(x));
    const double h = pb.times[1] - pb.times[0];
    parallel_for(nt, [&](std::size_t m) {
        if (m == 0) return;
        Field acc(pb.grid(), pb.m());
        acc.spectral = true;
        for (std::size_t i = 0; i <= m; ++i) {
            const double w = (i == 0 || i == m) ? 0.5 * h : h;
            for (int c = 0; c < acc.m; ++c)
                for (std::size_t k = 0; k < acc.npts(); ++k)
                    acc.at(c, k) += w * std::exp(Psi[m][k] - Psi[i][k]) * fh[i].at(c, k);
        }
        out[m] = inverse_transform(acc);
    });
    return out;
}

// Precomputed per-mode weights for the stochastic convolution on a fine grid
// that refines the solution grid.  Tag points are fine-piece midpoints.
class StochasticConvolution {
public:
    StochasticConvolution(const SPDEProblem& pb, std::vector<double> fine) : pb_(pb), fine_(std::move(fine)) {
        pb.validate();
        check_increasing(fine_);
        if (fine_.front() != 0.0 || std::abs(fine_.back() - pb.times.back()) > 1e-12)
            throw Error(Errc::grid_mismatch, "fine grid must span the solution grid");
        // solution time m sits at fine index idx_[m]
        for (double t : pb.times) idx_.push_back(detail::time_index(fine_, t));
        std::vector<double> pts;  // solution times and fine midpoints, increasing
        for (std::size_t c = 0; c + 1 < fine_.size(); ++c) {
            pts.push_back(fine_[c]);
            pts.push_back(0.5 * (fine_[c] + fine_[c + 1]));
        }
        pts.push_back(fine_.back());
        const auto Psi = cumulative_exponent(pb.psi, pb.grid(), pts);
        const std::size_t N = pb.grid().size();
        for (int m = 1; m <= pb.steps(); ++m) {
            const auto& Pm = Psi[2 * idx_[m]];
            const auto& Pp = Psi[2 * idx_[m - 1]];
            MultTable st(N);
            for (std::size_t k = 0; k < N; ++k) st[k] = std::exp(Pm[k] - Pp[k]);
            step_.push_back(std::move(st));
            for (std::size_t c = idx_[m - 1]; c < idx_[m]; ++c) {
                MultTable w(N);
                const auto& Pc = Psi[2 * c + 1];
                for (std::size_t k = 0; k < N; ++k) w[k] = std::exp(Pm[k] - Pc[k]);
                tag_.push_back(std::move(w));
            }
        }
        for (const auto& gi : pb.g) {
            std::vector<MultTable> gh;
            for (int c = 0; c < gi.m; ++c)
                for (int j = 0; j < gi.J; ++j) {
                    Field tmp(gi.grid, 1);
                    std::copy(gi.slot(c, j), gi.slot(c, j) + N, tmp.values.begin());
                    gh.push_back(forward_transform(tmp).values);
                }
            ghat_.push_back(std::move(gh));
        }
    }

    const std::vector<double>& fine() const { return fine_; }
    int cells() const { return int(fine_.size()) - 1; }
    // cell index range of solution step m (1-based)
    std::pair<std::size_t, std::size_t> step_cells(int m) const { return {idx_[m - 1], idx_[m]}; }
    const cplx* ghat(int m, int c, int j) const { return ghat_[m - 1][std::size_t(c) * pb_.q.J() + j].data(); }
    bool zero_g() const { return pb_.g.empty(); }

    // Spectral values of the stochastic part at every solution time for noise
    // increments W (J x cells).
    std::vector<Field> spectral(const Eigen::MatrixXd& W) const {
        const std::size_t N = pb_.grid().size();
        const int mK = pb_.m(), J = pb_.q.J();
        std::vector<Field> out;
        Field X(pb_.grid(), mK);
        X.spectral = true;
        out.push_back(X);
        if (zero_g()) {
            out.resize(pb_.times.size(), X);
            return out;
        }
        std::vector<cplx> S(N);
        std::size_t tag = 0;
        for (int m = 1; m <= pb_.steps(); ++m) {
            for (int c = 0; c < mK; ++c)
                for (std::size_t k = 0; k < N; ++k) X.at(c, k) *= step_[m - 1][k];
            const auto [c0, c1] = step_cells(m);
            for (int j = 0; j < J; ++j) {
                std::fill(S.begin(), S.end(), cplx(0));
                for (std::size_t cell = c0; cell < c1; ++cell) {
                    const double w = W(j, int(cell));
                    if (w == 0) continue;
                    const auto& tw = tag_[tag + (cell - c0)];
                    for (std::size_t k = 0; k < N; ++k) S[k] += w * tw[k];
                }
                for (int c = 0; c < mK; ++c) {
                    const cplx* gh = ghat(m, c, j);
                    for (std::size_t k = 0; k < N; ++k) X.at(c, k) += gh[k] * S[k];
                }
            }
            tag += c1 - c0;
            out.push_back(X);
        }
        return out;
    }

private:
    const SPDEProblem& pb_;
    std::vector<double> fine_;
    std::vector<std::size_t> idx_;
    std::vector<MultTable> step_, tag_;
    std::vector<std::vector<MultTable>> ghat_;
};

inline std::vector<double> refined_times(const std::vector<double>& times, int refine) {
    std::vector<double> out{times.front()};
    for (std::size_t i = 1; i < times.size(); ++i)
        for (int r = 1; r <= refine; ++r)
            out.push_back(r == refine ? times[i] : times[i - 1] + (times[i] - times[i - 1]) * r / refine);
    return out;
}

struct SolutionEnsemble {
    std::vector<double> times;
    std::vector<double> fine;          // noise grid
    std::vector<std::vector<Field>> samples;  // (n_samples, n_times)
    std::vector<Eigen::MatrixXd> noise;       // per sample, J x cells
    Estimator estimator = Estimator::modewise;
    std::uint64_t seed = 0;
    int n_samples() const { return int(samples.size()); }
};

inline std::vector<Field> to_physical(std::vector<Field> v) {
    for (auto& f : v) f = inverse_transform(f);
    return v;
}

// Modewise: fine-grid increments drawn from the exact increment Gram.
// Pathwise: Riemann sums over differenced sampled paths.  Same law, disjoint
// random streams and factorizations.
inline Eigen::MatrixXd modewise_noise(const IncrementSource& src, std::uint64_t seed, std::uint64_t s) {
    return src.draw(seed, purpose::modewise, s);
}

inline Eigen::MatrixXd pathwise_noise(const PathSample& ps, int s) {
    Eigen::MatrixXd W(ps.J, int(ps.nt()) - 1);
    for (int j = 0; j < ps.J; ++j)
        for (std::size_t i = 0; i + 1 < ps.nt(); ++i) W(j, int(i)) = ps.at(s, j, i + 1) - ps.at(s, j, i);
    return W;
}

inline SolutionEnsemble stochastic_convolution_modewise(const SPDEProblem& pb, int n_samples, std::uint64_t seed) {
    StochasticConvolution sc(pb, refined_times(pb.times, pb.refine));
    IncrementSource src(sc.fine(), pb.q.J(), pb.kernel);
    SolutionEnsemble e;
    e.times = pb.times;
    e.fine = sc.fine();
    e.estimator = Estimator::modewise;
    e.seed = seed;
    e.samples.resize(n_samples);
    e.noise.resize(n_samples);
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        e.noise[s] = modewise_noise(src, seed, s);
        e.samples[s] = to_physical(sc.spectral(e.noise[s]));
    });
    return e;
}

inline SolutionEnsemble stochastic_convolution_pathwise(const SPDEProblem& pb, const PathSample& paths) {
    if (paths.J != pb.q.J()) throw Error(Errc::grid_mismatch, "paths J differs from QSpec");
    StochasticConvolution sc(pb, paths.times);
    SolutionEnsemble e;
    e.times = pb.times;
    e.fine = paths.times;
    e.estimator = Estimator::pathwise;
    e.seed = paths.seed;
    e.samples.resize(paths.n_samples);
    e.noise.resize(paths.n_samples);
    parallel_for(std::size_t(paths.n_samples), [&](std::size_t s) {
        e.noise[s] = pathwise_noise(paths, int(s));
        e.samples[s] = to_physical(sc.spectral(e.noise[s]));
    });
    return e;
}

// Streams full solution samples u = u1 + u2 + u3 to a callback, keeping memory
// bounded; fn(sample index, fields at solution times, noise increments).
template <class Fn>
void for_each_sample(const SPDEProblem& pb, int n_samples, std::uint64_t seed, Estimator est, Fn&& fn) {
    pb.validate();
    const auto u1 = deterministic_homogeneous(pb);
    const auto u2 = deterministic_forced(pb);
    std::vector<Field> det(u1.size());
    for (std::size_t m = 0; m < u1.size(); ++m) det[m] = u1[m] + u2[m];
    const auto fine = refined_times(pb.times, pb.refine);
    StochasticConvolution sc(pb, fine);
    std::unique_ptr<IncrementSource> src;
    PathSample paths;
    if (!sc.zero_g()) {
        if (est == Estimator::modewise) src = std::make_unique<IncrementSource>(fine, pb.q.J(), pb.kernel);
        else paths = sample_paths(pb.kernel, fine, pb.q, n_samples, seed);
    }
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(pb.q.J(), sc.cells());
        std::vector<Field> u = det;
        if (!sc.zero_g()) {
            W = est == Estimator::modewise ? modewise_noise(*src, seed, s) : pathwise_noise(paths, int(s));
            const auto u3 = to_physical(sc.spectral(W));
            for (std::size_t m = 0; m < u.size(); ++m) u[m] += u3[m];
        }
        fn(s, u, W);
    });
}

inline SolutionEnsemble solve(const SPDEProblem& pb, int n_samples, std::uint64_t seed, Estimator est) {
    SolutionEnsemble e;
    e.times = pb.times;
    e.fine = refined_times(pb.times, pb.refine);
    e.estimator = est;
    e.seed = seed;
    e.samples.resize(n_samples);
    e.noise.resize(n_samples);
    for_each_sample(pb, n_samples, seed, est, [&](std::size_t s, std::vector<Field>& u, const Eigen::MatrixXd& W) {
        e.samples[s] = std::move(u);
        e.noise[s] = W;
    });
    return e;
}

struct ResidualReport {
    double max_residual = 0;       // over samples and times
    double mean_max_residual = 0;  // sample mean of the per-sample max over t
    double mean_field_residual = 0;  // residual of the ensemble mean (max over t)
};

// Checks u^(t,k) = u^0(k) + int_0^t (psi u^ + f^) ds + sum_j sum_{cells<=t} g^_j(k) Delta beta_j
// with trapezoid time quadrature on the solution grid.
inline ResidualReport mode_residual(const SPDEProblem& pb, const SolutionEnsemble& e, std::size_t k, int comp = 0) {
    const std::size_t nt = e.times.size();
    const double h = e.times[1] - e.times[0];
    std::vector<cplx> psik(nt), fk(nt, 0.0);
    double xi[3];
    pb.grid().frequency(k, xi);
    for (std::size_t m = 0; m < nt; ++m) psik[m] = pb.psi(e.times[m], std::span<const double>(xi, pb.grid().d));
    if (!pb.f.empty())
        for (std::size_t m = 0; m < nt; ++m) fk[m] = forward_transform(pb.f[m]).at(comp, k);
    std::vector<std::vector<cplx>> gk;  // per step, per j
    for (const auto& gi : pb.g) {
        std::vector<cplx> row;
        for (int j = 0; j < gi.J; ++j) {
            Field tmp(gi.grid, 1);
            std::copy(gi.slot(comp, j), gi.slot(comp, j) + gi.npts(), tmp.values.begin());
            row.push_back(forward_transform(tmp).values[k]);
        }
        gk.push_back(row);
    }
    const int R = int((e.fine.size() - 1) / (nt - 1));
    ResidualReport r;
    std::vector<cplx> mean_res(nt, 0.0);
    std::vector<std::vector<cplx>> uh(e.n_samples(), std::vector<cplx>(nt));
    for (int s = 0; s < e.n_samples(); ++s)
        for (std::size_t m = 0; m < nt; ++m) uh[s][m] = forward_transform(e.samples[s][m]).at(comp, k);
    for (int s = 0; s < e.n_samples(); ++s) {
        cplx integral = 0, noise = 0;
        double mx = 0;
        for (std::size_t m = 0; m < nt; ++m) {
            if (m > 0) {
                integral += 0.5 * h * (psik[m - 1] * uh[s][m - 1] + fk[m - 1] + psik[m] * uh[s][m] + fk[m]);
                if (!gk.empty())
                    for (int j = 0; j < pb.q.J(); ++j)
                        for (int c = int(m - 1) * R; c < int(m) * R; ++c) noise += gk[m - 1][j] * e.noise[s](j, c);
            }
            const cplx res = uh[s][m] - uh[s][0] - integral - noise;
            mean_res[m] += res / double(e.n_samples());
            mx = std::max(mx, std::abs(res));
        }
        r.max_residual = std::max(r.max_residual, mx);
        r.mean_max_residual += mx / e.n_samples();
    }
    for (auto& v : mean_res) r.mean_field_residual = std::max(r.mean_field_residual, std::abs(v));
    return r;
}

}  // namespace spdelab
