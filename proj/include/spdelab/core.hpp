#pragma once
// Shared plumbing: error kinds, counter-based RNG, running statistics,
// a small deterministic parallel_for and a few quadrature rules.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace spdelab {

enum class Errc {
    class_violation,
    numerical_precision,
    symbol_domain,
    ordering,
    shape_mismatch,
    unsupported_parameter,
    kernel_validity,
    alignment,
    grid_mismatch,
    hypothesis_violation,
    argument_range,
    density_absent,
    config
};

inline const char* errc_name(Errc e) {
    switch (e) {
    case Errc::class_violation: return "class-violation";
    case Errc::numerical_precision: return "numerical-precision";
    case Errc::symbol_domain: return "symbol-domain";
    case Errc::ordering: return "ordering";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::unsupported_parameter: return "unsupported-parameter";
    case Errc::kernel_validity: return "kernel-validity";
    case Errc::alignment: return "alignment";
    case Errc::grid_mismatch: return "grid-mismatch";
    case Errc::hypothesis_violation: return "hypothesis-violation";
    case Errc::argument_range: return "argument-range";
    case Errc::density_absent: return "density-absent";
    case Errc::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc kind, const std::string& what)
        : std::runtime_error(std::string(errc_name(kind)) + ": " + what), kind_(kind) {}
    Errc kind() const { return kind_; }

private:
    Errc kind_;
};

// ---------------------------------------------------------------- RNG

// Philox4x32-10 (Salmon et al. 2011).  Stateless in the counter, so any
// (seed, stream, index) triple gives the same numbers on every platform.
class Philox4x32 {
public:
    using ctr_t = std::array<std::uint32_t, 4>;
    using key_t = std::array<std::uint32_t, 2>;

    static ctr_t block(ctr_t c, key_t k) {
        for (int r = 0; r < 10; ++r) {
            c = round(c, k);
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        return c;
    }

private:
    static ctr_t round(const ctr_t& c, const key_t& k) {
        const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c[0];
        const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c[2];
        const auto hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const auto hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stream id for a (purpose, a, b) triple; purposes keep unrelated draws apart.
inline std::uint64_t stream_id(std::uint64_t purpose, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(purpose) ^ a) ^ (b * 0x632BE59BD9B4E019ull));
}

// Standard normals from one substream, Box-Muller on 53-bit uniforms.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) : stream_(stream) {
        const std::uint64_t k = splitmix64(seed);
        key_ = {std::uint32_t(k), std::uint32_t(k >> 32)};
    }

    double next() {
        if (pos_ == 2) refill();
        return buf_[pos_++];
    }

    double uniform() {
        // consumes one normal slot's worth of counter space; cheap enough
        auto out = Philox4x32::block(counter(), key_);
        ++index_;
        return to_unit(out[0], out[1]);
    }

private:
    Philox4x32::ctr_t counter() const {
        return {std::uint32_t(index_), std::uint32_t(index_ >> 32), std::uint32_t(stream_),
                std::uint32_t(stream_ >> 32)};
    }
    static double to_unit(std::uint32_t a, std::uint32_t b) {
        const std::uint64_t bits = (std::uint64_t(a) << 21) ^ (std::uint64_t(b) >> 11);
        return (double(bits & ((1ull << 53) - 1)) + 0.5) * 0x1p-53;
    }
    void refill() {
        auto out = Philox4x32::block(counter(), key_);
        ++index_;
        const double u1 = to_unit(out[0], out[1]);
        const double u2 = to_unit(out[2], out[3]);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        buf_[0] = rad * std::cos(ang);
        buf_[1] = rad * std::sin(ang);
        pos_ = 0;
    }

    std::uint64_t stream_;
    std::uint64_t index_ = 0;
    Philox4x32::key_t key_{};
    std::array<double, 2> buf_{};
    int pos_ = 2;
};

namespace purpose {
inline constexpr std::uint64_t paths = 1;
inline constexpr std::uint64_t wiener_exact = 2;
inline constexpr std::uint64_t malliavin = 3;
inline constexpr std::uint64_t modewise = 4;
inline constexpr std::uint64_t multiplier = 5;
inline constexpr std::uint64_t r2 = 6;
inline constexpr std::uint64_t battery = 7;
}  // namespace purpose

// ---------------------------------------------------------------- threads

inline unsigned thread_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TOOL_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = std::min<unsigned>(hw, unsigned(v));
    }
    return hw;
}

// Runs body(i) for i in [0,n).  Results must go to per-index slots so the
// outcome does not depend on scheduling.
namespace detail {
inline thread_local bool in_worker = false;
}

template <class F>
void parallel_for(std::size_t n, F&& body) {
    const unsigned nt = detail::in_worker ? 1u : unsigned(std::min<std::size_t>(thread_count(), n));
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nt);
    for (unsigned w = 0; w < nt; ++w) {
        pool.emplace_back([&, w] {
            detail::in_worker = true;
            try {
                for (std::size_t i = w; i < n; i += nt) body(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- stats

struct Moments {
    double mean = 0, var = 0;  // var is the unbiased sample variance
    double se_mean = 0;        // standard error of the mean
    double se_var = 0;         // standard error of the sample variance
    std::size_t n = 0;
};

inline Moments moments(const std::vector<double>& x) {
    Moments m;
    m.n = x.size();
    if (m.n < 2) {
        if (m.n == 1) m.mean = x[0];
        return m;
    }
    long double s = 0;
    for (double v : x) s += v;
    m.mean = double(s / m.n);
    long double s2 = 0, s4 = 0;
    for (double v : x) {
        const long double d = v - m.mean;
        s2 += d * d;
        s4 += d * d * d * d;
    }
    const double n = double(m.n);
    m.var = double(s2 / (n - 1));
    m.se_mean = std::sqrt(m.var / n);
    const double mu4 = double(s4 / n);
    const double sig2 = double(s2 / n);
    m.se_var = std::sqrt(std::max(0.0, (mu4 - sig2 * sig2) / n));
    return m;
}

// Covariance of paired samples with a delta-method standard error.
inline std::pair<double, double> covariance_se(const std::vector<double>& x,
                                               const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i) prod[i] = (x[i] - mx) * (y[i] - my);
    auto m = moments(prod);
    return {m.mean * double(n) / double(n - 1), m.se_mean};
}

// ---------------------------------------------------------------- quadrature

struct QuadRule {
    std::vector<double> nodes, weights;
};

// Golub-Welsch for the generalized Laguerre weight y^a e^{-y} on (0,inf).
inline QuadRule gauss_laguerre(int n, double a) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        J(i, i) = 2.0 * i + a + 1.0;
        if (i + 1 < n) {
            const double b = std::sqrt((i + 1.0) * (i + 1.0 + a));
            J(i, i + 1) = b;
            J(i + 1, i) = b;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadRule q;
    const double mu0 = std::tgamma(a + 1.0);
    for (int i = 0; i < n; ++i) {
        q.nodes.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        q.weights.push_back(mu0 * v * v);
    }
    return q;
}

inline QuadRule gauss_legendre(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        const double k = i + 1.0;
        const double b = k / std::sqrt(4 * k * k - 1);
        J(i, i + 1) = b;
        J(i + 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadRule q;
    for (int i = 0; i < n; ++i) {
        q.nodes.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        q.weights.push_back(2.0 * v * v);
    }
    return q;
}

// Composite Simpson on [a,b] with an even number of intervals >= ceil((b-a)/h).
template <class F>
auto simpson(F&& f, double a, double b, double h) {
    long n = std::max(2L, long(std::ceil((b - a) / h - 1e-9)));
    if (n % 2) ++n;
    const double dh = (b - a) / double(n);
    auto acc = f(a) + f(b);
    for (long i = 1; i < n; ++i) acc += f(a + i * dh) * double(i % 2 ? 4 : 2);
    return acc * (dh / 3.0);
}

inline bool is_pow2(long n) { return n > 0 && (n & (n - 1)) == 0; }

inline double conj_exp(double r) {
    if (std::isinf(r)) return 1.0;
    if (r == 1.0) return std::numeric_limits<double>::infinity();
    return r / (r - 1.0);
}

}  // namespace spdelab
