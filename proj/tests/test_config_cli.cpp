#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "selkov/config.hpp"
#include "selkov/experiments.hpp"

namespace fs = std::filesystem;
using namespace selkov;

namespace {

const std::string kConfigs = SELKOV_CONFIG_DIR;
const std::string kCli = SELKOV_CLI_PATH;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> problems_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool has(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

int run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
    const std::string cmd = kCli + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Scratch : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("selkov-test-" + std::to_string(::getpid()) + "-" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    fs::path dir;
};

fs::path only_subdir(const fs::path& root) {
    fs::path found;
    int n = 0;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) {
            found = e.path();
            ++n;
        }
    EXPECT_EQ(n, 1);
    return found;
}

}  // namespace

TEST(Config, BundledConfigsParse) {
    for (const auto& e : fs::directory_iterator(kConfigs)) {
        if (e.path().extension() == ".cfg") {
            EXPECT_NO_THROW(parse_config(e.path().string())) << e.path();
        }
    }
}

TEST(Config, CanonicalRoundTrip) {
    const auto cfg = parse_config(kConfigs + "/section7.cfg");
    const std::string once = canonical_string(cfg);
    EXPECT_EQ(canonical_string(parse_config_text(once)), once);
    EXPECT_EQ(cfg.system.variant, SchemeVariant::Section7Literal);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.system.trunc.sites(), 1u);
}

TEST(Config, EmptyFileListsRequiredSections) {
    const auto p = problems_of("");
    for (const char* s : {"/model", "/forcing", "/levy", "/truncation", "/grid", "/ensemble", "/seed"})
        EXPECT_TRUE(has(p, s)) << s;
}

TEST(Config, PositivityViolationNamed) {
    auto doc = json::parse(slurp(kConfigs + "/section7.cfg"));
    doc["model"]["a1"] = -1;
    doc["model"]["b2"] = 0;
    doc["model"]["p"] = 0;
    const auto p = problems_of(doc.dump());
    EXPECT_TRUE(has(p, "a1 must be positive"));
    EXPECT_TRUE(has(p, "b2 must be positive"));
    EXPECT_TRUE(has(p, "/model/p"));
}

TEST(Config, UnknownKeyAndBadLambda) {
    auto doc = json::parse(slurp(kConfigs + "/section7.cfg"));
    doc["model"]["a3"] = 1;
    doc["model"]["lambda"] = 1.5;
    const auto p = problems_of(doc.dump());
    EXPECT_TRUE(has(p, "/model/a3: unknown key"));
    EXPECT_TRUE(has(p, "lambda"));
}

TEST(Config, PiMultiplesAccepted) {
    const auto cfg = parse_config(kConfigs + "/periodicity.cfg");
    ASSERT_TRUE(cfg.system.forcing.chi.has_value());
    EXPECT_DOUBLE_EQ(*cfg.system.forcing.chi, std::numbers::pi);
}

TEST(Config, InvalidJsonReported) {
    const auto p = problems_of("{\"model\": ");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(has(p, "not valid JSON"));
}

TEST_F(Scratch, ValidateConfigExitCodes) {
    EXPECT_EQ(run("validate-config " + kConfigs + "/section7.cfg"), 0);
    std::ofstream(dir / "bad.cfg") << "{}";
    EXPECT_EQ(run("validate-config " + (dir / "bad.cfg").string()), 1);
    EXPECT_EQ(run("no-such-subcommand"), 1);
}

TEST_F(Scratch, DemoIsByteIdenticalAcrossRuns) {
    ASSERT_EQ(run("demo-section7 --seed 42 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run("demo-section7 --seed 42 --threads 2 --out " + (dir / "b").string()), 0);
    const fs::path a = only_subdir(dir / "a") / "section7", b = only_subdir(dir / "b") / "section7";
    EXPECT_EQ(only_subdir(dir / "a").filename(), only_subdir(dir / "b").filename());
    for (const char* f : {"result.json", "series.csv", "trajectories.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_EQ(slurp(a / "trajectories.csv").substr(0, 18), "t,site,u,v,path_id");
    EXPECT_EQ(slurp(a / "series.csv").substr(0, 25), "x,value,ci_lo,ci_hi,label");
    EXPECT_EQ(slurp(a / "result.json").find("host"), std::string::npos);
}

TEST_F(Scratch, OutputRootFromEnvironment) {
    const std::string cmd = "SELKOV_OUTPUT_ROOT=" + (dir / "env").string() + " " + kCli + " demo-section7 > /dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(only_subdir(dir / "env") / "section7" / "result.json"));
}

TEST_F(Scratch, PullbackThenDistance) {
    const std::string cfg = kConfigs + "/absorption.cfg";
    ASSERT_EQ(run("pullback " + cfg + " --tau 0 --horizon 0.5 --seed 1 --out " + (dir / "p").string(), dir / "p1.txt"), 0);
    ASSERT_EQ(run("pullback " + cfg + " --tau 0 --horizon 0.5 --seed 2 --out " + (dir / "p").string(), dir / "p2.txt"), 0);
    auto path_of = [&](const char* f) {
        std::string s = slurp(dir / f);
        while (!s.empty() && s.back() == '\n') s.pop_back();
        return s + "/measure.csv";
    };
    const std::string a = path_of("p1.txt"), b = path_of("p2.txt");
    ASSERT_NE(a, b);
    ASSERT_EQ(run("distance " + a + " " + a, dir / "d0.json"), 0);
    EXPECT_NEAR(json::parse(slurp(dir / "d0.json"))["d_BL"].get<double>(), 0.0, 1e-12);
    ASSERT_EQ(run("distance " + a + " " + b, dir / "d1.json"), 0);
    const auto d = json::parse(slurp(dir / "d1.json"));
    EXPECT_GT(d["d_BL"].get<double>(), 0.0);
    EXPECT_LE(d["d_BL"].get<double>(), d["W1"].get<double>() + 1e-9);
    EXPECT_EQ(run("distance " + a + " " + (dir / "missing.csv").string()), 1);
}

TEST_F(Scratch, CheckDissipativity) {
    ASSERT_EQ(run("check-dissipativity " + kConfigs + "/absorption.cfg --tau 0 -C 2", dir / "d.json"), 0);
    const auto d = json::parse(slurp(dir / "d.json"));
    EXPECT_TRUE(d["hypothesis_ok"].get<bool>());
    EXPECT_GT(d["varpi"].get<double>(), 0.0);
    EXPECT_NEAR(d["L1_tau"].get<double>(), 2.0 * d["R_tau"].get<double>(), 1e-12);
    auto doc = json::parse(slurp(kConfigs + "/absorption.cfg"));
    doc["model"]["a1"] = 0.5;
    std::ofstream(dir / "weak.cfg") << doc.dump();
    EXPECT_EQ(run("check-dissipativity " + (dir / "weak.cfg").string()), 2);
}

TEST_F(Scratch, UpperSemicontinuityExperimentPasses) {
    ASSERT_EQ(run("experiment " + kConfigs + "/upper-semicontinuity.cfg --out " + dir.string(), dir / "out.txt"), 0);
    const fs::path res = only_subdir(dir) / "upper-semicontinuity" / "result.json";
    ASSERT_TRUE(fs::exists(res));
    EXPECT_EQ(json::parse(slurp(res))["verdict"], "pass");
    EXPECT_TRUE(fs::exists(res.parent_path() / "meta.json"));
}
