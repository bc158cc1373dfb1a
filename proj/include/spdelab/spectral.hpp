#pragma once
// Periodic grids, the unitary DFT, Fourier multipliers and the evolution
// operator T(t,s) with its convolution kernel.

#include <map>
#include <mutex>
#include <tuple>

#include <fftw3.h>

#include "symbol_spec.hpp"

namespace spdelab {

struct GridSpec {
    int d = 1;
    int n = 64;
    double L = 2.0 * std::numbers::pi;
    double dt_quad = 0.0;  // 0 means (t-s)/64

    void validate() const {
        if (d < 1 || d > 3) throw Error(Errc::argument_range, "grid dimension must be 1..3");
        if (n < 4 || !is_pow2(n)) throw Error(Errc::argument_range, "grid n must be a power of two >= 4");
        if (!(L > 0)) throw Error(Errc::argument_range, "grid period must be positive");
        if (dt_quad < 0) throw Error(Errc::argument_range, "dt_quad must be >= 0");
    }
    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < d; ++i) s *= std::size_t(n);
        return s;
    }
    double cell() const { return std::pow(L / n, d); }
    int wavenumber(int i) const { return i < n / 2 ? i : i - n; }

    // multi-index of flat position p (row-major, last axis fastest)
    void unflatten(std::size_t p, int* idx) const {
        for (int a = d - 1; a >= 0; --a) {
            idx[a] = int(p % n);
            p /= n;
        }
    }
    void frequency(std::size_t p, double* xi) const {
        int idx[3];
        unflatten(p, idx);
        for (int a = 0; a < d; ++a) xi[a] = 2.0 * std::numbers::pi * wavenumber(idx[a]) / L;
    }
    void position(std::size_t p, double* x) const {
        int idx[3];
        unflatten(p, idx);
        for (int a = 0; a < d; ++a) x[a] = idx[a] * L / n;
    }
    // periodic offset from the origin, in [-L/2, L/2)
    void offset(std::size_t p, double* x) const {
        int idx[3];
        unflatten(p, idx);
        for (int a = 0; a < d; ++a) x[a] = wavenumber(idx[a]) * L / n;
    }
    bool operator==(const GridSpec& o) const { return d == o.d && n == o.n && L == o.L; }
};

struct Field {
    GridSpec grid;
    int m = 1;
    std::vector<cplx> values;  // (m, n^d)
    bool spectral = false;

    Field() = default;
    Field(const GridSpec& g, int m_) : grid(g), m(m_), values(std::size_t(m_) * g.size()) {}

    std::size_t npts() const { return grid.size(); }
    cplx* comp(int c) { return values.data() + std::size_t(c) * npts(); }
    const cplx* comp(int c) const { return values.data() + std::size_t(c) * npts(); }
    cplx& at(int c, std::size_t p) { return values[std::size_t(c) * npts() + p]; }
    const cplx& at(int c, std::size_t p) const { return values[std::size_t(c) * npts() + p]; }

    Field& operator+=(const Field& o) {
        check_same(o);
        for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
        return *this;
    }
    Field& operator*=(double c) {
        for (auto& v : values) v *= c;
        return *this;
    }
    void check_same(const Field& o) const {
        if (!(grid == o.grid) || m != o.m || values.size() != o.values.size())
            throw Error(Errc::shape_mismatch, "fields differ in grid or codomain");
    }
};

inline Field operator+(Field a, const Field& b) { return a += b; }
inline Field operator-(Field a, const Field& b) {
    a.check_same(b);
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] -= b.values[i];
    return a;
}

// K (x) U_0 valued field: an m x J matrix per grid point.
struct OperatorField {
    GridSpec grid;
    int m = 1, J = 1;
    std::vector<cplx> values;  // (m, J, n^d)

    OperatorField() = default;
    OperatorField(const GridSpec& g, int m_, int J_)
        : grid(g), m(m_), J(J_), values(std::size_t(m_) * J_ * g.size()) {}
    std::size_t npts() const { return grid.size(); }
    cplx* slot(int c, int j) { return values.data() + (std::size_t(c) * J + j) * npts(); }
    const cplx* slot(int c, int j) const { return values.data() + (std::size_t(c) * J + j) * npts(); }
    bool zero() const {
        for (auto& v : values)
            if (v != cplx(0)) return false;
        return true;
    }
};

// ---------------------------------------------------------------- FFT

namespace detail {

class FftCache {
public:
    static FftCache& get() {
        static FftCache c;
        return c;
    }
    fftw_plan plan(int d, int n, int sign) {
        std::lock_guard<std::mutex> lk(mu_);
        auto key = std::make_tuple(d, n, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::size_t N = 1;
        for (int i = 0; i < d; ++i) N *= n;
        auto* buf = fftw_alloc_complex(N);
        int dims[3] = {n, n, n};
        fftw_plan p = fftw_plan_dft(d, dims, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        plans_[key] = p;
        return p;
    }

private:
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline void fft_inplace(const GridSpec& g, cplx* data, int sign) {
    fftw_plan p = FftCache::get().plan(g.d, g.n, sign);
    auto* ptr = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(p, ptr, ptr);
    const double s = 1.0 / std::sqrt(double(g.size()));
    const std::size_t N = g.size();
    for (std::size_t i = 0; i < N; ++i) data[i] *= s;
}

}  // namespace detail

inline void check_field(const Field& f) {
    f.grid.validate();
    if (f.m < 1 || f.values.size() != std::size_t(f.m) * f.grid.size())
        throw Error(Errc::shape_mismatch, "field payload does not match grid and codomain");
}

inline Field forward_transform(Field f) {
    check_field(f);
    for (int c = 0; c < f.m; ++c) detail::fft_inplace(f.grid, f.comp(c), FFTW_FORWARD);
    f.spectral = true;
    return f;
}

inline Field inverse_transform(Field f) {
    check_field(f);
    for (int c = 0; c < f.m; ++c) detail::fft_inplace(f.grid, f.comp(c), FFTW_BACKWARD);
    f.spectral = false;
    return f;
}

// ---------------------------------------------------------------- multipliers

using MultTable = std::vector<cplx>;

template <class Fn>
MultTable multiplier_table(const GridSpec& g, Fn&& fn) {
    g.validate();
    MultTable tab(g.size());
    double xi[3];
    for (std::size_t p = 0; p < tab.size(); ++p) {
        g.frequency(p, xi);
        tab[p] = fn(std::span<const double>(xi, g.d));
    }
    return tab;
}

inline MultTable symbol_table(const SymbolSpec& sym, double t, const GridSpec& g) {
    return multiplier_table(g, [&](std::span<const double> xi) { return sym(t, xi); });
}

inline Field apply_table(const MultTable& tab, Field f) {
    check_field(f);
    if (tab.size() != f.npts()) throw Error(Errc::shape_mismatch, "multiplier table size");
    for (int c = 0; c < f.m; ++c) {
        cplx* v = f.comp(c);
        detail::fft_inplace(f.grid, v, FFTW_FORWARD);
        for (std::size_t p = 0; p < tab.size(); ++p) v[p] *= tab[p];
        detail::fft_inplace(f.grid, v, FFTW_BACKWARD);
    }
    return f;
}

inline Field apply_pseudo_diff(const SymbolSpec& sym, double t, const Field& f) {
    return apply_table(symbol_table(sym, t, f.grid), f);
}

inline MultTable bessel_table(const SymbolSpec& phi, double alpha, const GridSpec& g) {
    return multiplier_table(g, [&](std::span<const double> xi) {
        return cplx(std::pow(1.0 + phi(0.0, xi).real(), alpha / 2.0), 0);
    });
}

inline Field bessel_lift(const SymbolSpec& phi, double alpha, const Field& f) {
    if (alpha == 0.0) return f;
    return apply_table(bessel_table(phi, alpha, f.grid), f);
}

// Riemann-sum L^p norm with the Euclidean norm across components; p = inf allowed.
inline double lp_norm(const Field& f, double p) {
    const std::size_t N = f.npts();
    if (std::isinf(p)) {
        double mx = 0;
        for (std::size_t x = 0; x < N; ++x) {
            double s = 0;
            for (int c = 0; c < f.m; ++c) s += std::norm(f.at(c, x));
            mx = std::max(mx, std::sqrt(s));
        }
        return mx;
    }
    long double acc = 0;
    for (std::size_t x = 0; x < N; ++x) {
        double s = 0;
        for (int c = 0; c < f.m; ++c) s += std::norm(f.at(c, x));
        acc += std::pow(s, p / 2.0);
    }
    return std::pow(double(acc) * f.grid.cell(), 1.0 / p);
}

inline double l2_discrete(const Field& f) {
    long double s = 0;
    for (auto& v : f.values) s += std::norm(v);
    return std::sqrt(double(s));
}

inline double bessel_norm(const Field& f, const SymbolSpec& phi, double alpha, double p) {
    return lp_norm(bessel_lift(phi, alpha, f), p);
}

// exp(int_s^t psi(r, xi) dr) on the grid.
inline MultTable evolution_table(const SymbolSpec& psi, double t, double s, const GridSpec& g) {
    if (t < s) throw Error(Errc::ordering, "evolution needs t >= s");
    if (t == s) return MultTable(g.size(), cplx(1.0, 0.0));
    if (!psi.time_dependent)
        return multiplier_table(g, [&](std::span<const double> xi) { return std::exp((t - s) * psi(s, xi)); });
    const double h = g.dt_quad > 0 ? g.dt_quad : (t - s) / 64.0;
    return multiplier_table(g, [&](std::span<const double> xi) {
        return std::exp(simpson([&](double r) { return psi(r, xi); }, s, t, h));
    });
}

inline Field evolution_apply(const SymbolSpec& psi, double t, double s, const Field& f) {
    if (t < s) throw Error(Errc::ordering, "evolution needs t >= s");
    if (t == s) return f;
    return apply_table(evolution_table(psi, t, s, f.grid), f);
}

// Convolution kernel of T(t,s): p(x) = (2 pi)^{-d} int e^{i x xi} M(xi) d xi on
// the torus, so that the Riemann sum of p equals M(0).
inline Field kernel_from_table(const MultTable& tab, const GridSpec& g) {
    Field k(g, 1);
    std::copy(tab.begin(), tab.end(), k.values.begin());
    detail::fft_inplace(g, k.comp(0), FFTW_BACKWARD);
    const double scale = std::sqrt(double(g.size())) / std::pow(g.L, g.d);
    k *= scale;
    return k;
}

inline Field kernel_p_psi(const SymbolSpec& psi, double t, double s, const GridSpec& g) {
    if (!(t > s)) throw Error(Errc::ordering, "kernel needs t > s");
    return kernel_from_table(evolution_table(psi, t, s, g), g);
}

inline double riemann_sum(const Field& f, int c = 0) {
    long double s = 0;
    for (std::size_t p = 0; p < f.npts(); ++p) s += f.at(c, p).real();
    return double(s) * f.grid.cell();
}

// Sample a real function of position into component c.
template <class Fn>
Field sample_field(const GridSpec& g, int m, Fn&& fn) {
    Field f(g, m);
    double x[3];
    for (std::size_t p = 0; p < g.size(); ++p) {
        g.position(p, x);
        for (int c = 0; c < m; ++c) f.at(c, p) = fn(c, std::span<const double>(x, g.d));
    }
    return f;
}

}  // namespace spdelab
