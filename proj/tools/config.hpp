#pragma once
// JSON config -> library objects for the command-line tool.  Every object
// rejects keys it does not know.

#include <set>

#include <spdelab/io.hpp>

namespace spdelab::cfg {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error(Errc::config, where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw Error(Errc::config, "unknown key '" + it.key() + "' in " + where);
}

template <class T>
T opt(const json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(Errc::config, std::string("bad type for '") + key + "'");
    }
}

inline GridSpec grid(const json& j, GridSpec def = {}) {
    check_keys(j, {"d", "n", "L", "dt_quad"}, "grid");
    GridSpec g;
    g.d = opt(j, "d", def.d);
    g.n = opt(j, "n", def.n);
    g.L = opt(j, "L", def.L);
    g.dt_quad = opt(j, "dt_quad", def.dt_quad);
    g.validate();
    return g;
}

inline SymbolSpec symbol(const json& j, int d, const char* def) {
    if (j.is_null()) return builtin_symbol(std::string(def), d);
    if (j.is_string()) return builtin_symbol(j.get<std::string>(), d);
    return builtin_symbol(j, d);
}

inline CovarianceKernel kernel(const json& j) {
    if (j.is_string()) return builtin_kernel(json{{"kernel", j.get<std::string>()}});
    return builtin_kernel(j);
}

// Spatial profiles: zero, bump (Gaussian at the centre of the box), cos (one
// Fourier mode), bandlimited (random, seeded).
inline Field field(const json& j, const GridSpec& g, int m) {
    if (j.is_null()) return Field(g, m);
    check_keys(j, {"type", "amplitude", "width", "k", "kmax", "seed"}, "field");
    const std::string type = opt<std::string>(j, "type", "zero");
    const double amp = opt(j, "amplitude", 1.0);
    if (type == "zero") return Field(g, m);
    if (type == "bump") {
        const double w = opt(j, "width", 0.5);
        if (!(w > 0)) throw Error(Errc::config, "bump width must be positive");
        return sample_field(g, m, [&](int, std::span<const double> x) {
            double r2 = 0;
            for (double v : x) r2 += (v - 0.5 * g.L) * (v - 0.5 * g.L);
            return amp * std::exp(-0.5 * r2 / (w * w));
        });
    }
    if (type == "cos") {
        const auto k = opt<std::vector<int>>(j, "k", std::vector<int>(g.d, 1));
        if (int(k.size()) != g.d) throw Error(Errc::config, "cos mode needs one wavenumber per axis");
        return sample_field(g, m, [&](int, std::span<const double> x) {
            double ph = 0;
            for (int a = 0; a < g.d; ++a) ph += 2 * std::numbers::pi * k[a] * x[a] / g.L;
            return amp * std::cos(ph);
        });
    }
    if (type == "bandlimited") {
        const int kmax = opt(j, "kmax", 4);
        const auto seed = opt<std::uint64_t>(j, "seed", 1);
        Field f = bandlimited_battery(g, 1, kmax, seed).front();
        Field out(g, m);
        for (int c = 0; c < m; ++c)
            for (std::size_t p = 0; p < g.size(); ++p) out.at(c, p) = amp * f.at(0, p);
        return out;
    }
    throw Error(Errc::config, "unknown field type '" + type + "'");
}

struct ProblemConfig {
    SPDEProblem pb;
    int n_samples = 64;
    Estimator est = Estimator::modewise;
};

// Problem description shared by simulate and verify-apriori.
inline const std::set<std::string>& problem_keys() {
    static const std::set<std::string> k = {"grid", "psi", "phi", "kernel", "lambdas", "T", "steps", "refine",
                                            "m", "u0", "f", "f_time", "g", "p", "q", "r", "n_samples", "estimator"};
    return k;
}

inline ProblemConfig problem(const json& j, const GridSpec& g, int steps) {
    ProblemConfig pc;
    SPDEProblem& pb = pc.pb;
    pb.psi = symbol(j.value("psi", json()), g.d, "heat");
    pb.phi = symbol(j.value("phi", json()), g.d, "power");
    pb.kernel = kernel(j.value("kernel", json("wiener")));
    pb.q.lambdas = opt(j, "lambdas", std::vector<double>{1.0});
    const double T = opt(j, "T", pb.kernel.T);
    pb.times = uniform_times(T, steps);
    pb.refine = opt(j, "refine", 8);
    const int m = opt(j, "m", 1);
    if (m < 1) throw Error(Errc::config, "m must be >= 1");
    pb.u0 = field(j.value("u0", json()), g, m);
    const json fj = j.value("f", json());
    if (!fj.is_null()) {
        const Field base = field(fj, g, m);
        const std::string prof = opt<std::string>(j, "f_time", "constant");
        if (prof != "constant" && prof != "cos") throw Error(Errc::config, "f_time must be constant or cos");
        for (double t : pb.times) {
            Field x = base;
            if (prof == "cos") x *= std::cos(3.0 * t / T);
            pb.f.push_back(std::move(x));
        }
    }
    const json gj = j.value("g", json());
    if (!gj.is_null()) {
        const Field base = field(gj, g, 1);
        for (int s = 0; s < steps; ++s) {
            OperatorField o(g, m, pb.q.J());
            for (int c = 0; c < m; ++c)
                for (int jj = 0; jj < pb.q.J(); ++jj) std::copy(base.values.begin(), base.values.end(), o.slot(c, jj));
            pb.g.push_back(std::move(o));
        }
    }
    pb.p = opt(j, "p", 2.0);
    pb.q_exp = opt(j, "q", 2.0);
    pb.r_exp = opt(j, "r", pb.kernel.r_exp);
    pc.n_samples = opt(j, "n_samples", 64);
    const std::string est = opt<std::string>(j, "estimator", "modewise");
    if (est == "modewise") pc.est = Estimator::modewise;
    else if (est == "pathwise") pc.est = Estimator::pathwise;
    else throw Error(Errc::config, "estimator must be modewise or pathwise");
    pb.validate();
    return pc;
}

// Named step functions and an elementary process referring to them:
// {"steps": {"a": {"breaks": [...], "coeffs": [...], "J": 1}},
//  "process": {"m": 1, "terms": [{"shape": "polynomial", "coeffs": [0, 1],
//              "dirs": ["a"], "weights": [1], "k": [1], "phi": "a"}]}}
inline std::map<std::string, StepFunction> steps(const json& j) {
    std::map<std::string, StepFunction> out;
    if (!j.is_object()) throw Error(Errc::config, "steps must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        check_keys(it.value(), {"breaks", "coeffs", "J"}, "step " + it.key());
        out.emplace(it.key(), StepFunction(opt<std::vector<double>>(it.value(), "breaks", {}), opt(it.value(), "J", 1),
                                           opt<std::vector<double>>(it.value(), "coeffs", {})));
    }
    return out;
}

inline ElementaryProcess process(const json& j, const std::map<std::string, StepFunction>& named) {
    check_keys(j, {"m", "terms"}, "process");
    auto lookup = [&](const std::string& n) {
        auto it = named.find(n);
        if (it == named.end()) throw Error(Errc::config, "unknown step function '" + n + "'");
        return it->second;
    };
    ElementaryProcess u;
    u.m = opt(j, "m", 1);
    for (const auto& t : j.value("terms", json::array())) {
        check_keys(t, {"shape", "coeffs", "dirs", "weights", "k", "phi"}, "term");
        CylinderFunctional F;
        const std::string shape = opt<std::string>(t, "shape", "polynomial");
        if (shape == "polynomial") F.shape = Shape::polynomial;
        else if (shape == "exp_neg_square") F.shape = Shape::exp_neg_square;
        else if (shape == "sine") F.shape = Shape::sine;
        else throw Error(Errc::config, "unknown shape '" + shape + "'");
        F.coeffs = opt(t, "coeffs", std::vector<double>{0.0, 1.0});
        for (const auto& d : opt<std::vector<std::string>>(t, "dirs", {})) F.dirs.push_back(lookup(d));
        F.weights = opt(t, "weights", std::vector<double>{});
        if (!F.weights.empty() && F.weights.size() != F.dirs.size())
            throw Error(Errc::config, "weights must match dirs");
        u.terms.push_back({F, opt(t, "k", std::vector<double>(u.m, 1.0)), lookup(opt<std::string>(t, "phi", ""))});
    }
    u.validate();
    return u;
}

}  // namespace spdelab::cfg
