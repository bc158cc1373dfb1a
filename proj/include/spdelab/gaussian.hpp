#pragma once
// Q-Gaussian processes truncated to J modes: path sampling, step functions in
// the RKHS, and Wiener integrals by the exact and the path route.

#include "covariance.hpp"

namespace spdelab {

struct QSpec {
    std::vector<double> lambdas{1.0};
    int J() const { return int(lambdas.size()); }
    void validate() const {
        if (lambdas.empty()) throw Error(Errc::argument_range, "QSpec needs at least one eigenvalue");
        for (std::size_t j = 0; j < lambdas.size(); ++j) {
            if (!(lambdas[j] > 0)) throw Error(Errc::argument_range, "QSpec eigenvalues must be positive");
            if (j && lambdas[j] > lambdas[j - 1]) throw Error(Errc::argument_range, "QSpec eigenvalues must decrease");
        }
    }
};

struct PathSample {
    std::vector<double> times;
    int n_samples = 0, J = 0;
    std::vector<double> paths;  // (n_samples, J, n_times)
    std::uint64_t seed = 0;

    std::size_t nt() const { return times.size(); }
    double& at(int s, int j, std::size_t i) { return paths[(std::size_t(s) * J + j) * nt() + i]; }
    double at(int s, int j, std::size_t i) const { return paths[(std::size_t(s) * J + j) * nt() + i]; }
};

inline PathSample sample_paths(const CovarianceKernel& k, const std::vector<double>& times, const QSpec& q,
                               int n_samples, std::uint64_t seed) {
    q.validate();
    check_increasing(times);
    if (times.empty() || times.front() < 0) throw Error(Errc::argument_range, "path times must lie in [0,T]");
    const std::size_t off = times.front() == 0.0 ? 1 : 0;
    std::vector<double> pos(times.begin() + off, times.end());
    const Eigen::MatrixXd F = psd_factor(gram_matrix(k, pos));
    PathSample ps;
    ps.times = times;
    ps.n_samples = n_samples;
    ps.J = q.J();
    ps.seed = seed;
    ps.paths.assign(std::size_t(n_samples) * ps.J * times.size(), 0.0);
    const int n = int(pos.size());
    parallel_for(std::size_t(n_samples), [&](std::size_t s) {
        Eigen::VectorXd z(n);
        for (int j = 0; j < ps.J; ++j) {
            NormalStream rng(seed, stream_id(purpose::paths, s, j));
            for (int i = 0; i < n; ++i) z(i) = rng.next();
            const Eigen::VectorXd b = F * z;
            for (int i = 0; i < n; ++i) ps.at(int(s), j, off + i) = b(i);
        }
    });
    return ps;
}

// Step function on (t_{i-1}, t_i]; coefficients in the orthonormal basis
// {sqrt(lambda_j) e_j} of U_0, so every U_0 inner product is a dot product.
struct StepFunction {
    std::vector<double> breaks;  // M+1 points
    int J = 1;
    std::vector<double> coeffs;  // (M, J)

    StepFunction() = default;
    StepFunction(std::vector<double> b, int J_, std::vector<double> c) : breaks(std::move(b)), J(J_), coeffs(std::move(c)) {
        validate();
    }
    int pieces() const { return breaks.empty() ? 0 : int(breaks.size()) - 1; }
    const double* piece(int i) const { return coeffs.data() + std::size_t(i) * J; }
    double lo(int i) const { return breaks[i]; }
    double hi(int i) const { return breaks[i + 1]; }
    void validate() const {
        if (breaks.size() == 1) throw Error(Errc::shape_mismatch, "step function needs >= 2 breakpoints");
        check_increasing(breaks);
        if (coeffs.size() != std::size_t(std::max(0, pieces())) * J)
            throw Error(Errc::shape_mismatch, "step function coefficients do not match pieces x J");
        for (double c : coeffs)
            if (!std::isfinite(c)) throw Error(Errc::argument_range, "step coefficients must be finite");
    }
    // single piece c * 1_{(a,b]} v
    static StepFunction indicator(double a, double b, std::vector<double> v) {
        const int J = int(v.size());
        return StepFunction({a, b}, J, std::move(v));
    }
    // value on the piece containing t (0 outside)
    std::vector<double> value(double t) const {
        std::vector<double> out(J, 0.0);
        for (int i = 0; i < pieces(); ++i)
            if (t > lo(i) && t <= hi(i)) std::copy(piece(i), piece(i) + J, out.begin());
        return out;
    }
    // restriction to (0, t]
    StepFunction truncated(double t) const {
        StepFunction out;
        out.J = J;
        for (int i = 0; i < pieces(); ++i) {
            if (lo(i) >= t) break;
            if (out.breaks.empty()) out.breaks.push_back(lo(i));
            out.breaks.push_back(std::min(hi(i), t));
            out.coeffs.insert(out.coeffs.end(), piece(i), piece(i) + J);
        }
        return out;
    }
    StepFunction scaled(double c) const {
        StepFunction out = *this;
        for (auto& v : out.coeffs) v *= c;
        return out;
    }
};

namespace detail {
inline double dot(const double* a, const double* b, int n) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}
inline double nrm(const double* a, int n) { return std::sqrt(dot(a, a, n)); }
}  // namespace detail

inline double inner_H_U0(const StepFunction& phi, const StepFunction& psi, const CovarianceKernel& k) {
    if (phi.pieces() == 0 || psi.pieces() == 0) return 0.0;
    if (phi.J != psi.J) throw Error(Errc::shape_mismatch, "step functions live in different U_0 truncations");
    long double s = 0;
    for (int i = 0; i < phi.pieces(); ++i)
        for (int j = 0; j < psi.pieces(); ++j) {
            const double c = detail::dot(phi.piece(i), psi.piece(j), phi.J);
            if (c != 0) s += c * rectangle_increment(k, phi.lo(i), phi.hi(i), psi.lo(j), psi.hi(j));
        }
    return double(s);
}

inline double norm_H_U0(const StepFunction& phi, const CovarianceKernel& k) {
    return std::sqrt(std::max(0.0, inner_H_U0(phi, phi, k)));
}

// ||phi||_{|H|}: the same rectangle sum applied to the piece norms.
inline double abs_norm_H_U0(const StepFunction& phi, const CovarianceKernel& k) {
    long double s = 0;
    for (int i = 0; i < phi.pieces(); ++i)
        for (int j = 0; j < phi.pieces(); ++j)
            s += detail::nrm(phi.piece(i), phi.J) * detail::nrm(phi.piece(j), phi.J) *
                 rectangle_increment(k, phi.lo(i), phi.hi(i), phi.lo(j), phi.hi(j));
    return std::sqrt(std::max(0.0L, s));
}

// L^r([0,T]; U_0) norm of a step function.
inline double lr_norm(const StepFunction& phi, double r) {
    if (std::isinf(r)) {
        double m = 0;
        for (int i = 0; i < phi.pieces(); ++i) m = std::max(m, detail::nrm(phi.piece(i), phi.J));
        return m;
    }
    double s = 0;
    for (int i = 0; i < phi.pieces(); ++i) s += std::pow(detail::nrm(phi.piece(i), phi.J), r) * (phi.hi(i) - phi.lo(i));
    return std::pow(s, 1.0 / r);
}

// Two-parameter step function valued in R^D, pieces (a-axis) x (b-axis).
struct TwoParamStep {
    std::vector<double> breaks_a, breaks_b;
    int D = 1;
    std::vector<double> coeffs;  // (Ma, Mb, D)
    int Ma() const { return int(breaks_a.size()) - 1; }
    int Mb() const { return int(breaks_b.size()) - 1; }
    const double* cell(int i, int j) const { return coeffs.data() + (std::size_t(i) * Mb() + j) * D; }

    static TwoParamStep outer(const StepFunction& a, const StepFunction& b) {
        TwoParamStep t;
        t.breaks_a = a.breaks;
        t.breaks_b = b.breaks;
        t.D = a.J * b.J;
        for (int i = 0; i < a.pieces(); ++i)
            for (int j = 0; j < b.pieces(); ++j)
                for (int p = 0; p < a.J; ++p)
                    for (int q = 0; q < b.J; ++q) t.coeffs.push_back(a.piece(i)[p] * b.piece(j)[q]);
        return t;
    }
};

namespace detail {
inline double tensor_sum(const TwoParamStep& P, const TwoParamStep& Q, const CovarianceKernel& k, bool absolute) {
    if (P.D != Q.D) throw Error(Errc::shape_mismatch, "two-parameter step functions differ in value dimension");
    std::vector<double> ra(std::size_t(P.Ma()) * Q.Ma()), rb(std::size_t(P.Mb()) * Q.Mb());
    for (int i = 0; i < P.Ma(); ++i)
        for (int j = 0; j < Q.Ma(); ++j)
            ra[std::size_t(i) * Q.Ma() + j] =
                rectangle_increment(k, P.breaks_a[i], P.breaks_a[i + 1], Q.breaks_a[j], Q.breaks_a[j + 1]);
    for (int i = 0; i < P.Mb(); ++i)
        for (int j = 0; j < Q.Mb(); ++j)
            rb[std::size_t(i) * Q.Mb() + j] =
                rectangle_increment(k, P.breaks_b[i], P.breaks_b[i + 1], Q.breaks_b[j], Q.breaks_b[j + 1]);
    long double s = 0;
    for (int i = 0; i < P.Ma(); ++i)
        for (int a = 0; a < P.Mb(); ++a)
            for (int j = 0; j < Q.Ma(); ++j)
                for (int b = 0; b < Q.Mb(); ++b) {
                    const double w = ra[std::size_t(i) * Q.Ma() + j] * rb[std::size_t(a) * Q.Mb() + b];
                    if (w == 0) continue;
                    const double c = absolute ? nrm(P.cell(i, a), P.D) * nrm(Q.cell(j, b), Q.D)
                                              : dot(P.cell(i, a), Q.cell(j, b), P.D);
                    s += c * w;
                }
    return double(s);
}
}  // namespace detail

inline double tensor_inner(const TwoParamStep& P, const TwoParamStep& Q, const CovarianceKernel& k) {
    return detail::tensor_sum(P, Q, k, false);
}

inline double abs_tensor_norm(const TwoParamStep& P, const CovarianceKernel& k) {
    return std::sqrt(std::max(0.0, detail::tensor_sum(P, P, k, true)));
}

inline std::vector<double> wiener_integral_exact(const StepFunction& h, const CovarianceKernel& k, const QSpec& q,
                                                 int n_samples, std::uint64_t seed) {
    q.validate();
    if (h.pieces() && h.J != q.J()) throw Error(Errc::shape_mismatch, "step function J differs from QSpec");
    double var = inner_H_U0(h, h, k);
    if (var < -1e-12) throw Error(Errc::kernel_validity, "negative variance from the kernel");
    var = std::max(var, 0.0);
    const double sd = std::sqrt(var);
    std::vector<double> out(n_samples);
    for (int s = 0; s < n_samples; ++s) {
        NormalStream rng(seed, stream_id(purpose::wiener_exact, std::uint64_t(s)));
        out[s] = sd * rng.next();
    }
    return out;
}

namespace detail {
inline std::size_t time_index(const std::vector<double>& times, double t) {
    auto it = std::lower_bound(times.begin(), times.end(), t - 1e-12);
    if (it == times.end() || std::abs(*it - t) > 1e-12)
        throw Error(Errc::alignment, "step breakpoint is not a path time");
    return std::size_t(it - times.begin());
}
}  // namespace detail

// Sum_j sqrt(lambda_j) Sum_i <h(s_i), e_j>_{U_0} Delta beta_j.  With coefficients
// stored in the sqrt(lambda_j) e_j basis, sqrt(lambda_j) <h, e_j>_{U_0} is just
// the stored coordinate, so lambda drops out here.
inline std::vector<double> wiener_integral_path(const StepFunction& h, const PathSample& ps) {
    std::vector<double> out(ps.n_samples, 0.0);
    if (h.pieces() == 0) return out;
    if (h.J != ps.J) throw Error(Errc::shape_mismatch, "step function J differs from the paths");
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (int i = 0; i < h.pieces(); ++i)
        idx.emplace_back(detail::time_index(ps.times, h.lo(i)), detail::time_index(ps.times, h.hi(i)));
    for (int s = 0; s < ps.n_samples; ++s) {
        double acc = 0;
        for (int i = 0; i < h.pieces(); ++i)
            for (int j = 0; j < ps.J; ++j) {
                const double c = h.piece(i)[j];
                if (c != 0) acc += c * (ps.at(s, j, idx[i].second) - ps.at(s, j, idx[i].first));
            }
        out[s] = acc;
    }
    return out;
}

// Same integral with the raw series coefficients a_ij = <h(s_i), e_j>_{U_0}.
inline std::vector<double> wiener_integral_series(const StepFunction& a, const QSpec& q, const PathSample& ps) {
    StepFunction h = a;
    for (int i = 0; i < h.pieces(); ++i)
        for (int j = 0; j < h.J; ++j) h.coeffs[std::size_t(i) * h.J + j] *= std::sqrt(q.lambdas[j]);
    return wiener_integral_path(h, ps);
}

// Increments of the J scalar processes over the cells of a time grid, drawn
// from the exact increment Gram with one substream per (sample, j).  Any step
// function aligned with the grid integrates to sum_cells sum_j c_j Delta beta_j,
// so processes sharing a grid and a seed see the same underlying noise.
class IncrementSource {
public:
    IncrementSource(std::vector<double> grid, int J, const CovarianceKernel& k) : J_(J) {
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
                   grid.end());
        if (grid.empty() || grid.front() > 0) grid.insert(grid.begin(), 0.0);
        if (grid.front() < 0) throw Error(Errc::argument_range, "grid must lie in [0,T]");
        grid_ = grid;
        std::vector<double> pos(grid_.begin() + 1, grid_.end());
        if (!pos.empty()) factor_ = psd_factor(increment_gram(k, pos));
    }
    int cells() const { return int(grid_.size()) - 1; }
    int J() const { return J_; }
    const std::vector<double>& grid() const { return grid_; }

    // J x cells
    Eigen::MatrixXd draw(std::uint64_t seed, std::uint64_t purpose_tag, std::uint64_t sample) const {
        const int C = cells();
        Eigen::MatrixXd X(J_, C);
        Eigen::VectorXd z(C);
        for (int j = 0; j < J_; ++j) {
            NormalStream rng(seed, stream_id(purpose_tag, sample, std::uint64_t(j)));
            for (int c = 0; c < C; ++c) z(c) = rng.next();
            if (C) X.row(j) = (factor_ * z).transpose();
        }
        return X;
    }

    // J x cells coefficient matrix of an aligned step function
    Eigen::MatrixXd project(const StepFunction& h) const {
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(J_, cells());
        if (h.pieces() && h.J != J_) throw Error(Errc::shape_mismatch, "step function J differs from noise");
        for (int i = 0; i < h.pieces(); ++i) {
            const std::size_t a = detail::time_index(grid_, h.lo(i));
            const std::size_t b = detail::time_index(grid_, h.hi(i));
            for (std::size_t c = a; c < b; ++c)
                for (int j = 0; j < J_; ++j) P(j, int(c)) = h.piece(i)[j];
        }
        return P;
    }

private:
    int J_;
    std::vector<double> grid_;
    Eigen::MatrixXd factor_;
};

// Jointly Gaussian (beta(d_1), ..., beta(d_n)) for a list of directions.
class JointGaussian {
public:
    JointGaussian(const std::vector<StepFunction>& dirs, const CovarianceKernel& k) {
        const int n = int(dirs.size());
        gram_ = Eigen::MatrixXd(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b <= a; ++b) gram_(a, b) = gram_(b, a) = inner_H_U0(dirs[a], dirs[b], k);
        factor_ = psd_factor(gram_);
    }
    const Eigen::MatrixXd& gram() const { return gram_; }
    int size() const { return int(gram_.rows()); }
    Eigen::VectorXd draw(std::uint64_t seed, std::uint64_t purpose_tag, std::uint64_t sample) const {
        NormalStream rng(seed, stream_id(purpose_tag, sample));
        Eigen::VectorXd z(size());
        for (int i = 0; i < size(); ++i) z(i) = rng.next();
        return factor_ * z;
    }

private:
    Eigen::MatrixXd gram_, factor_;
};

}  // namespace spdelab
