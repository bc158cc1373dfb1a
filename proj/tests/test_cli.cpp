#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "spdelab_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(SPDELAB_CLI) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path write_config(const std::string& name, const std::string& body) {
    fs::create_directories(work);
    const fs::path p = work / name;
    std::ofstream(p) << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Case {
    const char* command;
    const char* config;
};

// Small but non-trivial settings for every command.
const Case cases[] = {
    {"kernels", R"({})"},
    {"simulate", R"({"grid": {"n": 16}, "steps": 4, "n_samples": 16, "g": {"type": "bump", "amplitude": 0.5},
                     "kernel": {"kernel": "fbm", "H": 0.75}, "u0": {"type": "cos"}})"},
    {"verify-skorohod", R"({"n_samples": 2000})"},
    {"verify-maximal", R"({"n_samples": 500})"},
    {"verify-lp", R"({})"},
    {"verify-bessel", R"({})"},
    {"verify-multiplier", R"({})"},
    {"verify-kernelenv", R"({"taus": [0.1, 0.2]})"},
    {"verify-goperator", R"({})"},
    {"verify-apriori", R"({"n_samples": 4, "levels": [[16, 4], [32, 8]]})"},
};

}  // namespace

TEST(Cli, ByteIdenticalReruns) {
    for (const auto& c : cases) {
        const auto cfg = write_config(std::string(c.command) + ".json", c.config);
        const fs::path a = work / (std::string(c.command) + "_a"), b = work / (std::string(c.command) + "_b");
        fs::remove_all(a);
        fs::remove_all(b);
        const int ra = run(std::string(c.command) + " --config " + cfg.string() + " --seed 5 --out " + a.string());
        const int rb = run(std::string(c.command) + " --config " + cfg.string() + " --seed 5 --out " + b.string());
        EXPECT_TRUE(ra == 0 || ra == 1) << c.command << " exit " << ra;
        EXPECT_EQ(ra, rb) << c.command;
        ASSERT_TRUE(fs::exists(a / "report.json")) << c.command;
        int files = 0;
        for (const auto& e : fs::directory_iterator(a)) {
            ++files;
            EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << c.command << " " << e.path().filename();
        }
        EXPECT_GE(files, 2) << c.command;
    }
}

TEST(Cli, SeedChangesMonteCarloOutput) {
    const auto cfg = write_config("seeded.json", R"({"n_samples": 2000})");
    const fs::path a = work / "seed_a", b = work / "seed_b";
    fs::remove_all(a);
    fs::remove_all(b);
    run("verify-skorohod --config " + cfg.string() + " --seed 1 --out " + a.string());
    run("verify-skorohod --config " + cfg.string() + " --seed 2 --out " + b.string());
    EXPECT_NE(slurp(a / "report.json"), slurp(b / "report.json"));
}

TEST(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(run("verify-lp --config " + write_config("unknown.json", R"({"bogus": 1})").string() + " --out " +
                  (work / "e1").string()),
              2);
    EXPECT_EQ(run("verify-lp --config " + (work / "missing.json").string()), 2);
    EXPECT_EQ(run("verify-lp --config " + write_config("notjson.json", "{oops").string()), 2);
    EXPECT_EQ(run("verify-bessel --config " + write_config("sym.json", R"({"phi": {"name": "power", "zz": 1}})").string() +
                  " --out " + (work / "e2").string()),
              2);
    EXPECT_EQ(run("verify-lp --config " + write_config("wrongcmd.json", R"({"command": "simulate"})").string()), 2);
    EXPECT_EQ(run("nosuchcommand"), 2);
    EXPECT_EQ(run(""), 2);
}

// 0 when the checks pass, 1 when an expected-to-pass check fails.
TEST(Cli, FailingCheckExitsOne) {
    const auto cfg = write_config("mfail.json", R"({"symbols": [{"symbol": "coordinate", "conditions": ["mihlin"],
                                                                  "expect": "pass"}]})");
    EXPECT_EQ(run("verify-multiplier --config " + cfg.string() + " --out " + (work / "m1").string()), 1);
    const auto ok = write_config("mok.json", R"({"symbols": [{"symbol": "coordinate", "conditions": ["mihlin"],
                                                              "expect": "fail"}]})");
    EXPECT_EQ(run("verify-multiplier --config " + ok.string() + " --out " + (work / "m0").string()), 0);
}
