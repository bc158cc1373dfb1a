#include <gtest/gtest.h>

#include <config.hpp>

using namespace spdelab;
using nlohmann::json;

TEST(Binary, RoundTrip) {
    GridSpec g{2, 8, 3.5};
    std::vector<Field> recs;
    for (int r = 0; r < 3; ++r)
        recs.push_back(sample_field(g, 2, [&](int c, std::span<const double> x) { return r + c + x[0] - 0.5 * x[1]; }));
    for (DType dt : {DType::complex64, DType::complex128}) {
        std::stringstream ss;
        write_fields(ss, recs, dt);
        const auto back = read_fields(ss);
        ASSERT_EQ(back.size(), recs.size());
        for (std::size_t r = 0; r < recs.size(); ++r) {
            EXPECT_EQ(back[r].grid, g);
            EXPECT_EQ(back[r].m, 2);
            const double tol = dt == DType::complex64 ? 1e-6 : 0.0;
            for (std::size_t i = 0; i < recs[r].values.size(); ++i)
                EXPECT_LE(std::abs(back[r].values[i] - recs[r].values[i]), tol);
        }
    }
}

TEST(Binary, RejectsGarbage) {
    std::stringstream ss("XXXXgarbage");
    EXPECT_THROW(read_fields(ss), Error);
    std::stringstream tr;
    write_fields(tr, {Field(GridSpec{1, 8}, 1)});
    std::string s = tr.str();
    s.resize(s.size() - 3);
    std::stringstream cut(s);
    EXPECT_THROW(read_fields(cut), Error);
}

TEST(Csv, Escaping) {
    EXPECT_EQ(csv_escape("plain"), "plain");
    EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(csv_escape("two\nlines"), "\"two\nlines\"");
    CsvWriter w({"name", "value"});
    w.row(std::vector<std::string>{"x,y", "1"});
    w.row(std::vector<double>{0.1, std::numeric_limits<double>::infinity()});
    EXPECT_EQ(w.str(), "name,value\r\n\"x,y\",1\r\n0.10000000000000001,inf\r\n");
    EXPECT_THROW(w.row(std::vector<double>{1.0}), Error);
}

TEST(Numbers, RoundTripAndNonFinite) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) EXPECT_EQ(std::stod(fmt_num(v)), v);
    EXPECT_EQ(fmt_num(std::nan("")), "nan");
    EXPECT_EQ(num(std::numeric_limits<double>::infinity()), json("inf"));
}

TEST(Hash, StableAndOrderIndependent) {
    const json a = json::parse(R"({"x": 1, "y": [1, 2], "z": {"k": "v"}})");
    const json b = json::parse(R"({"z": {"k": "v"}, "y": [1, 2], "x": 1})");
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
    EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"x": 2, "y": [1, 2], "z": {"k": "v"}})")));
}

TEST(Json, RatioReportFields) {
    RatioReport r;
    r.name = "t";
    r.lhs = 1;
    r.rhs_components = {2, 0};
    r.refinement_trace = {{8, 0.5}, {16, 0.5}};
    finish(r);
    const json j = to_json(r);
    EXPECT_EQ(j.at("name"), "t");
    EXPECT_DOUBLE_EQ(j.at("ratio").get<double>(), 0.5);
    EXPECT_TRUE(j.at("passed").get<bool>());
}

TEST(Svg, ProducesDocument) {
    const std::string s = svg_line_plot("title", {{"a", {1, 2, 4}, {1, 0.5, 0.25}}}, true);
    EXPECT_NE(s.find("<svg"), std::string::npos);
    EXPECT_NE(s.find("</svg>"), std::string::npos);
}

TEST(Config, RejectsUnknownKeys) {
    try {
        cfg::grid(json{{"n", 32}, {"nn", 3}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), Errc::config);
    }
    EXPECT_THROW(cfg::field(json{{"type", "bump"}, {"widht", 1}}, GridSpec{}, 1), Error);
    EXPECT_THROW(cfg::field(json{{"type", "wave"}}, GridSpec{}, 1), Error);
}

TEST(Config, ProblemDefaults) {
    const GridSpec g{1, 16};
    const auto pc = cfg::problem(json::object(), g, 4);
    EXPECT_EQ(pc.pb.psi.name, "heat");
    EXPECT_EQ(pc.pb.kernel.name, "wiener");
    EXPECT_EQ(pc.pb.steps(), 4);
    EXPECT_TRUE(pc.pb.g.empty());
}

TEST(Config, ProcessFromSteps) {
    const json j = json::parse(R"({"steps": {"a": {"breaks": [0, 0.5], "coeffs": [1]}},
                                   "process": {"terms": [{"shape": "sine", "dirs": ["a"], "phi": "a"}]}})");
    const auto named = cfg::steps(j.at("steps"));
    const auto u = cfg::process(j.at("process"), named);
    ASSERT_EQ(u.terms.size(), 1u);
    EXPECT_EQ(u.terms[0].F.shape, Shape::sine);
    EXPECT_THROW(cfg::process(json::parse(R"({"terms": [{"phi": "b", "dirs": ["a"]}]})"), named), Error);
}
