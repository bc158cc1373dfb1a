#pragma once
// Artifacts: flat binary fields, RFC-4180 CSV, JSON reports, SVG line plots
// and the JSONL results ledger.  Everything here is byte-deterministic except
// that SVG is only promised to be content-deterministic.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "verify.hpp"

namespace spdelab {

// ---------------------------------------------------------------- binary fields

// Header (little endian): "SPDF", u32 version, i32 d, i32 n, i32 m, f64 L,
// u32 dtype (0 complex64, 1 complex128), u32 record count.  Payload: records of
// m x n^d row-major (re, im) pairs.
enum class DType : std::uint32_t { complex64 = 0, complex128 = 1 };

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw Error(Errc::config, "truncated field file");
    return v;
}
}  // namespace detail

inline void write_fields(std::ostream& os, const std::vector<Field>& recs, DType dt = DType::complex64) {
    if (recs.empty()) throw Error(Errc::argument_range, "nothing to write");
    const Field& f0 = recs.front();
    os.write("SPDF", 4);
    detail::put<std::uint32_t>(os, 1);
    detail::put<std::int32_t>(os, f0.grid.d);
    detail::put<std::int32_t>(os, f0.grid.n);
    detail::put<std::int32_t>(os, f0.m);
    detail::put<double>(os, f0.grid.L);
    detail::put<std::uint32_t>(os, std::uint32_t(dt));
    detail::put<std::uint32_t>(os, std::uint32_t(recs.size()));
    for (const auto& f : recs) {
        f.check_same(f0);
        for (const auto& v : f.values) {
            if (dt == DType::complex64) {
                detail::put<float>(os, float(v.real()));
                detail::put<float>(os, float(v.imag()));
            } else {
                detail::put<double>(os, v.real());
                detail::put<double>(os, v.imag());
            }
        }
    }
}

inline std::vector<Field> read_fields(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "SPDF", 4) != 0) throw Error(Errc::config, "not a field file");
    if (detail::get<std::uint32_t>(is) != 1) throw Error(Errc::config, "unknown field file version");
    GridSpec g;
    g.d = detail::get<std::int32_t>(is);
    g.n = detail::get<std::int32_t>(is);
    const int m = detail::get<std::int32_t>(is);
    g.L = detail::get<double>(is);
    const auto dt = DType(detail::get<std::uint32_t>(is));
    const auto count = detail::get<std::uint32_t>(is);
    g.validate();
    std::vector<Field> out;
    for (std::uint32_t r = 0; r < count; ++r) {
        Field f(g, m);
        for (auto& v : f.values) {
            if (dt == DType::complex64) {
                const float re = detail::get<float>(is), im = detail::get<float>(is);
                v = cplx(re, im);
            } else {
                const double re = detail::get<double>(is), im = detail::get<double>(is);
                v = cplx(re, im);
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------- CSV

inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) {
        if (c == '"') o += '"';
        o += c;
    }
    return o + "\"";
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw Error(Errc::shape_mismatch, "CSV row has the wrong number of cells");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += csv_escape(cells[i]);
        }
        out_ += "\r\n";
    }
    void row(const std::vector<double>& cells) {
        std::vector<std::string> s;
        for (double v : cells) s.push_back(fmt_num(v));
        row(s);
    }
    const std::string& str() const { return out_; }

private:
    std::size_t cols_;
    std::string out_;
};

// ---------------------------------------------------------------- JSON reports

using nlohmann::json;

inline json num(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

inline json to_json(const RatioReport& r) {
    json j;
    j["name"] = r.name;
    j["lhs"] = num(r.lhs);
    j["rhs_components"] = json::array();
    for (double v : r.rhs_components) j["rhs_components"].push_back(num(v));
    j["ratio"] = num(r.ratio);
    j["refinement_trace"] = json::array();
    for (auto& [lvl, v] : r.refinement_trace) j["refinement_trace"].push_back({lvl, num(v)});
    j["drift"] = num(r.drift);
    j["passed"] = r.passed;
    j["seed"] = r.seed;
    j["n_samples"] = r.n_samples;
    json ex = json::object();
    for (auto& [k, v] : r.extras) ex[k] = num(v);
    j["extras"] = ex;
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

inline json to_json(const IsometryReport& r) {
    return {{"lhs", num(r.lhs)},       {"rhs", num(r.rhs)},
            {"rhs_norm_term", num(r.rhs_norm_term)}, {"rhs_trace_term", num(r.rhs_trace_term)},
            {"se", num(r.se)},         {"z_score", num(r.z_score)},
            {"n_samples", r.n_samples}};
}

inline json to_json(const MultiplierReport& r) {
    json j{{"condition", condition_name(r.condition)},
           {"symbol", r.symbol},
           {"worst_constant", num(r.worst_constant)},
           {"lower_constant", num(r.lower_constant)},
           {"refined_constant", num(r.refined_constant)},
           {"hormander_constant", num(r.hormander_constant)},
           {"worst_alpha", r.worst_alpha},
           {"worst_xi", json::array()},
           {"passed", r.passed},
           {"samples_used", r.samples_used}};
    for (double x : r.worst_xi) j["worst_xi"].push_back(num(x));
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

inline json to_json(const BesselReport& r) {
    json j{{"alpha", r.alpha}, {"p", r.p}, {"C1_hat", num(r.C1_hat)}, {"C2_hat", num(r.C2_hat)},
           {"drift", num(r.drift)}, {"passed", r.passed}, {"n_fields", r.n_fields}, {"refinement_trace", json::array()}};
    for (auto& [n, a, b] : r.refinement_trace) j["refinement_trace"].push_back({n, num(a), num(b)});
    return j;
}

inline json to_json(const EnvelopeReport& r) {
    json j{{"taus", r.taus},
           {"sup_values", json::array()},
           {"scaling_measured", num(r.scaling_measured)},
           {"scaling_expected", num(r.scaling_expected)},
           {"tail_slope", num(r.tail_slope)},
           {"tail_required", num(r.tail_required)},
           {"passed", r.passed},
           {"bounds", json::array()}};
    for (double v : r.sup_values) j["sup_values"].push_back(num(v));
    for (const auto& b : r.bounds) {
        json jb{{"name", b.name}, {"exponent", b.exponent}, {"variation", num(b.variation)}, {"C", json::array()}};
        for (double c : b.C) jb["C"].push_back(num(c));
        j["bounds"].push_back(jb);
    }
    if (!r.detail.empty()) j["detail"] = r.detail;
    return j;
}

// ---------------------------------------------------------------- hashing, ledger

// FNV-1a over the canonical (sorted-key, compact) dump.
inline std::string config_hash(const json& j) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error(Errc::config, "cannot write " + p.string());
    os << s;
}

inline void append_ledger(const std::filesystem::path& p, const json& entry) {
    std::ofstream os(p, std::ios::binary | std::ios::app);
    if (!os) throw Error(Errc::config, "cannot append to " + p.string());
    os << entry.dump() << '\n';
}

// ---------------------------------------------------------------- SVG

struct Series {
    std::string label;
    std::vector<double> x, y;
};

inline std::string svg_line_plot(const std::string& title, const std::vector<Series>& series, bool logx = false) {
    const double W = 640, H = 400, ml = 70, mr = 20, mt = 40, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto tx = [&](double x) { return logx ? std::log2(x) : x; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + (y0 == 0 ? 1 : std::abs(y0) * 0.1);
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return ml + (tx(x) - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double yv = y0 + (y1 - y0) * t / 4.0;
        o << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
          << fmt_num(std::round(yv * 1e4) / 1e4) << "</text>\n";
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 6];
        o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.y[i])) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        o << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
            if (si == 0)
                o << "<text x=\"" << px(s.x[i]) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
                  << fmt_num(s.x[i]) << "</text>\n";
        }
        o << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 14 * (si + 1) << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
          << c << "\">" << s.label << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace spdelab
