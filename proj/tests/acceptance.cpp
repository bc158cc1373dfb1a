// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is 0 only when every criterion passes.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>

#include <config.hpp>

using namespace spdelab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kZ = 4.0;               // standard errors allowed for MC comparisons
constexpr double kDrift = 0.25;          // refinement drift limit
constexpr double kLawTol = 1e-12;        // evolution law, time-independent psi
constexpr double kLawTolTimeDep = 1e-6;  // evolution law, Simpson quadrature
constexpr double kEnvelopeVar = 0.2;
constexpr int kMC = 100000;
constexpr int kMCCross = 10000;
constexpr double kBudget1 = 30, kBudget6 = 10, kBudget7Level = 60, kBudget10 = 300;  // seconds
constexpr std::uint64_t kSeed = 20240601;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int n_failed = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double secs) {
    if (!ok) ++n_failed;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1fs", secs);
    std::cout << "criterion " << (id < 10 ? " " : "") << id << ": " << (ok ? "PASS" : "FAIL") << "  " << what << "  ["
              << detail << "; " << buf << "]" << std::endl;
}

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

const std::vector<const char*> kernel_names = {"wiener", "fbm"};
CovarianceKernel kern(const char* n) { return builtin_kernel(n, 0.75); }

void c1_wiener_isometry() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst = 0;
    for (const char* kn : kernel_names) {
        const auto k = kern(kn);
        for (const auto& c : standard_step_battery()) {
            const auto ps = sample_paths(k, c.h.breaks, c.q, kMC, kSeed);
            const auto m = moments(wiener_integral_path(c.h, ps));
            const double z = std::abs(m.var - inner_H_U0(c.h, c.h, k)) / m.se_var;
            worst = std::max(worst, z);
            ok = ok && z <= kZ;
        }
    }
    const double s = since(t0);
    report(1, ok && s < kBudget1, "Wiener-integral isometry, 8 cases", "max z " + fmt(worst, 3), s);
}

void c2_skorohod_exact() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string det;
    std::uint64_t seed = kSeed;
    // phi is normalized, so W(phi) ~ N(0,1) for every kernel; separate seeds keep the runs independent
    for (const char* kn : kernel_names) {
        const auto k = kern(kn);
        ++seed;
        const auto unit = StepFunction::indicator(0.0, 1.0, {1.0});
        const auto phi = unit.scaled(1.0 / norm_H_U0(unit, k));
        ElementaryProcess u;
        u.terms.push_back({CylinderFunctional::linear(phi), {1.0}, phi});
        const auto m = moments(skorohod_elementary(u, k, QSpec{}, kMC, seed));
        const double zm = std::abs(m.mean) / m.se_mean, zv = std::abs(m.var - 2.0) / m.se_var;
        ok = ok && zm <= kZ && zv <= kZ;
        det += std::string(det.empty() ? "" : ", ") + kn + " z_mean " + fmt(zm, 3) + " z_var " + fmt(zv, 3);
    }
    report(2, ok, "Skorohod exact case mean 0, variance 2", det, since(t0));
}

void c3_isometry_formula() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst = 0;
    for (const char* kn : kernel_names) {
        const auto k = kern(kn);
        for (const auto& c : standard_process_battery(k)) {
            const auto r = skorohod_moment_check(c.u, k, c.q, kMC, kSeed);
            worst = std::max(worst, r.z_score);
            ok = ok && r.z_score <= kZ;
        }
    }
    report(3, ok, "Skorohod isometry formula, 8 processes", "max z " + fmt(worst, 3), since(t0));
}

void c4_evolution_law() {
    const auto t0 = Clock::now();
    auto rel = [](const Field& a, const Field& b) { return l2_discrete(a - b) / l2_discrete(b); };
    auto test_field = [](const GridSpec& g) {
        return sample_field(g, 1, [&](int, std::span<const double> x) {
            double v = 0;
            for (double y : x) v += std::sin(y) + 0.5 * std::cos(3 * y);
            return std::exp(0.3 * v);
        });
    };
    double worst_ti = 0, worst_td = 0;
    for (int d : {1, 2}) {
        const GridSpec g{d, d == 1 ? 128 : 32, 2 * std::numbers::pi};
        const Field f = test_field(g);
        for (const char* name : {"heat", "neg_power"}) {
            const auto psi = builtin_symbol(name, d);
            const Field a = evolution_apply(psi, 1.0, 0.35, evolution_apply(psi, 0.35, 0.1, f));
            worst_ti = std::max(worst_ti, rel(a, evolution_apply(psi, 1.0, 0.1, f)));
        }
    }
    const GridSpec g{1, 128, 2 * std::numbers::pi};
    const Field f = test_field(g);
    const auto psi = builtin_symbol("heat_timevar");
    for (auto [s, r, t] : std::vector<std::array<double, 3>>{{0.0, 0.4, 1.0}, {0.2, 1.3, 2.0}, {0.0, 0.05, 0.1}}) {
        const Field a = evolution_apply(psi, t, r, evolution_apply(psi, r, s, f));
        worst_td = std::max(worst_td, rel(a, evolution_apply(psi, t, s, f)));
    }
    report(4, worst_ti <= kLawTol && worst_td <= kLawTolTimeDep, "evolution-system law",
           "time-independent " + fmt(worst_ti, 2) + ", time-dependent " + fmt(worst_td, 2), since(t0));
}

void c5_cross_estimator() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst = 0;
    for (const char* kn : kernel_names) {
        const auto pc = cfg::problem(json::parse(R"({"g": {"type": "bump", "width": 0.8, "amplitude": 0.5},
                                                    "refine": 8})"),
                                     GridSpec{1, 16, 2 * std::numbers::pi}, 4);
        SPDEProblem pb = pc.pb;
        pb.kernel = kern(kn);
        const auto a = stochastic_convolution_modewise(pb, kMCCross, kSeed);
        const auto b = stochastic_convolution_pathwise(
            pb, sample_paths(pb.kernel, refined_times(pb.times, pb.refine), pb.q, kMCCross, kSeed + 1));
        for (std::size_t k = 0; k <= 8; ++k) {
            std::vector<double> va(kMCCross), vb(kMCCross);
            for (int s = 0; s < kMCCross; ++s) {
                va[s] = std::norm(forward_transform(a.samples[s].back()).values[k]);
                vb[s] = std::norm(forward_transform(b.samples[s].back()).values[k]);
            }
            const auto ma = moments(va), mb = moments(vb);
            const double z = std::abs(ma.mean - mb.mean) / std::hypot(ma.se_mean, mb.se_mean);
            worst = std::max(worst, z);
            ok = ok && z <= kZ;
        }
    }
    report(5, ok, "modewise vs pathwise per-mode variance", "max z " + fmt(worst, 3) + " over 9 modes x 2 kernels",
           since(t0));
}

void c6_multipliers() {
    const auto t0 = Clock::now();
    bool ok = true;
    int n = 0;
    std::string bad;
    const XiSet xs = dyadic_samples(1);
    auto expect = [&](const SymbolSpec& s, bool passed, bool want) {
        ++n;
        if (passed != want) {
            ok = false;
            bad += s.name + " ";
        }
    };
    const std::vector<std::pair<double, double>> st = {{0.5, 0.0}, {1.0, 0.5}, {1.0, 1.0}, {2.0, 1.0}};
    for (auto [s, t] : st) {
        for (const json& j : {json{{"name", "bessel_m1"}, {"s", s}}, json{{"name", "bessel_m2"}, {"s", s}, {"t", t}},
                              json{{"name", "bessel_m3"}, {"s", s}, {"t", t}}}) {
            const auto sym = builtin_symbol(j, 1);
            expect(sym, check_mihlin(sym, xs).passed, true);
        }
    }
    expect(builtin_symbol("marcinkiewicz_m2", 2), check_marcinkiewicz(builtin_symbol("marcinkiewicz_m2", 2)).passed,
           true);
    for (const char* name : {"coordinate", "log1p"}) expect(builtin_symbol(name), check_mihlin(builtin_symbol(name), xs).passed, false);
    const double s = since(t0);
    report(6, ok && s < kBudget6, "multiplier checkers", std::to_string(n) + " outcomes as expected" + (bad.empty() ? "" : "; wrong: " + bad), s);
}

void c7_littlewood_paley() {
    const auto t0 = Clock::now();
    const auto phi = builtin_symbol("power"), psi = builtin_symbol("heat");
    bool ok = true;
    std::string det;
    double slowest = 0;
    struct Form {
        const char* name;
        int n_theta;
        double p, q, r;
    };
    for (const Form& fm : {Form{"scalar", 1, 2, 2, 2}, Form{"theta=4 r=4/3", 4, 2, 2, 4.0 / 3.0}}) {
        std::vector<std::pair<int, double>> trace;
        for (const LpLevel lv : {LpLevel{32, 16}, LpLevel{64, 32}, LpLevel{128, 64}}) {
            const auto tl = Clock::now();
            const auto r = lp_inequality_check(phi, psi, lp_bump(8.0, 0.5, fm.n_theta), fm.p, fm.q, fm.r, 8.0, {lv});
            slowest = std::max(slowest, since(tl));
            trace.emplace_back(lv.n, r.ratio);
        }
        const double dr = trace_drift(trace);
        bool fin = true;
        for (auto& [n, v] : trace) fin = fin && std::isfinite(v) && v > 0;
        ok = ok && fin && dr < kDrift;
        det += std::string(det.empty() ? "" : ", ") + fm.name + " ratio " + fmt(trace.back().second) + " drift " + fmt(dr, 2);
    }
    ok = ok && slowest < kBudget7Level;
    report(7, ok, "Littlewood-Paley ratio", det + ", slowest level " + fmt(slowest, 3) + "s", since(t0));
}

void c8_maximal() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst_drift = 0;
    for (const char* kn : kernel_names) {
        const auto k = kern(kn);
        for (const auto& c : standard_process_battery(k)) {
            const auto r = maximal_inequality_check(c.u, k, c.q, 2, 2, 20000, kSeed);
            worst_drift = std::max(worst_drift, r.drift);
            ok = ok && std::isfinite(r.ratio) && r.drift < kDrift;
        }
    }
    // random-walk oracle for E max_m S_m^2 with 256 Gaussian steps of variance 1/256
    const int steps = 256;
    std::mt19937_64 gen(kSeed);
    std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / steps));
    std::vector<double> orc(kMC);
    for (auto& v : orc) {
        double s = 0, mx = 0;
        for (int i = 0; i < steps; ++i) {
            s += nd(gen);
            mx = std::max(mx, s * s);
        }
        v = mx;
    }
    const auto mo = moments(orc);
    const auto unit = StepFunction::indicator(0.0, 1.0, {1.0});
    ElementaryProcess u;
    u.terms.push_back({CylinderFunctional::constant(1.0, unit), {1.0}, unit});
    std::vector<double> nodes;
    for (int m = 1; m <= steps; ++m) nodes.push_back(double(m) / steps);
    const auto ml = maximal_lhs(u, builtin_kernel("wiener"), nodes, 2.0, kMC, kSeed + 7);
    const double z = std::abs(ml.mean - mo.mean) / std::hypot(ml.se_mean, mo.se_mean);
    ok = ok && z <= kZ;
    report(8, ok, "maximal-inequality ratio and random-walk oracle",
           "max drift " + fmt(worst_drift, 2) + ", lhs " + fmt(ml.mean, 5) + " vs oracle " + fmt(mo.mean, 5) + " (z " +
               fmt(z, 3) + ")",
           since(t0));
}

void c9_envelope() {
    const auto t0 = Clock::now();
    const auto r = kernel_envelope_check(builtin_symbol("power"), builtin_symbol("heat"), {0.1, 0.2, 0.4},
                                         GridSpec{1, 256, 16.0});
    bool ok = true;
    std::string det;
    for (const auto& b : r.bounds) {
        ok = ok && b.variation < kEnvelopeVar;
        det += (det.empty() ? "" : ", ") + b.name + " var " + fmt(b.variation, 2);
    }
    report(9, ok, "kernel envelope constants", det, since(t0));
}

void c10_apriori() {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string det;
    for (const char* kn : kernel_names) {
        json base = json::parse(R"({"u0": {"type": "bump", "width": 0.6}, "f": {"type": "cos", "k": [1]},
                                    "f_time": "cos", "g": {"type": "bump", "width": 0.8, "amplitude": 0.5},
                                    "p": 2, "q": 2})");
        base["kernel"] = kn == std::string("fbm") ? json{{"kernel", "fbm"}, {"H", 0.75}} : json("wiener");
        const auto r = apriori_estimate_check(
            [&](int n, int nt) { return cfg::problem(base, GridSpec{1, n, 2 * std::numbers::pi}, nt).pb; }, 64, kSeed);
        ok = ok && std::isfinite(r.ratio) && r.drift < kDrift;
        det += std::string(det.empty() ? "" : ", ") + kn + " ratio " + fmt(r.ratio) + " drift " + fmt(r.drift, 2);
    }
    const double s = since(t0);
    report(10, ok && s < kBudget10, "a-priori estimate", det, s);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void c11_determinism() {
    const auto t0 = Clock::now();
    const fs::path work = fs::temp_directory_path() / "spdelab_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"kernels", "{}"},
        {"simulate", R"({"grid": {"n": 16}, "steps": 4, "n_samples": 16, "g": {"type": "bump"}, "kernel": "fbm"})"},
        {"verify-skorohod", R"({"n_samples": 2000})"},
        {"verify-maximal", R"({"n_samples": 500})"},
        {"verify-lp", "{}"},
        {"verify-bessel", "{}"},
        {"verify-multiplier", "{}"},
        {"verify-kernelenv", "{}"},
        {"verify-goperator", "{}"},
        {"verify-apriori", R"({"n_samples": 4, "levels": [[16, 4], [32, 8]]})"},
    };
    bool ok = true;
    int files = 0;
    std::string bad;
    for (const auto& [cmd, body] : cases) {
        const fs::path cfg = work / (cmd + ".json");
        std::ofstream(cfg) << body;
        for (const char* tag : {"a", "b"}) {
            const std::string line = std::string(SPDELAB_CLI) + " " + cmd + " --config " + cfg.string() +
                                     " --seed 11 --out " + (work / (cmd + "_" + tag)).string() + " >/dev/null 2>&1";
            const int st = std::system(line.c_str());
            if (!WIFEXITED(st) || WEXITSTATUS(st) > 1) {
                ok = false;
                bad += cmd + "(exit) ";
            }
        }
        for (const auto& e : fs::directory_iterator(work / (cmd + "_a"))) {
            ++files;
            if (slurp(e.path()) != slurp(work / (cmd + "_b") / e.path().filename())) {
                ok = false;
                bad += cmd + "/" + e.path().filename().string() + " ";
            }
        }
    }
    report(11, ok, "byte-identical reruns",
           std::to_string(cases.size()) + " commands, " + std::to_string(files) + " files" +
               (bad.empty() ? "" : "; differ: " + bad),
           since(t0));
}

}  // namespace

int main() {
    const std::vector<void (*)()> all = {c1_wiener_isometry, c2_skorohod_exact, c3_isometry_formula,
                                         c4_evolution_law,   c5_cross_estimator, c6_multipliers,
                                         c7_littlewood_paley, c8_maximal,        c9_envelope,
                                         c10_apriori,        c11_determinism};
    for (std::size_t i = 0; i < all.size(); ++i) {
        try {
            all[i]();
        } catch (const std::exception& e) {
            report(int(i + 1), false, "threw", e.what(), 0);
        }
    }
    std::cout << (n_failed ? std::to_string(n_failed) + " criteria failed" : "all criteria passed") << std::endl;
    return n_failed ? 1 : 0;
}
