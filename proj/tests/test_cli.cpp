#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "fraudkit/cli.hpp"
#include "support.hpp"

using namespace fraudkit;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

const char* kPlan = R"([experiment]
name = clitest
seed = 5

[data]
source = synthetic
n_rows = 800
n_features = 6
fraud_fraction = 0.1
separation = 2.5

[samplers]
methods = none, smote

[models]
kinds = logreg, dtree
epochs = 4
)";

}  // namespace

TEST(Cli, NoArgumentsPrintsHelpAndFails) {
    const auto r = cli({});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("sweep-imbalance"), std::string::npos);
}

TEST(Cli, VersionAndHelpSucceed) {
    EXPECT_EQ(cli({"--version"}).code, 0);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({"run"}).code, 1);
    EXPECT_EQ(cli({"run", "/nonexistent/plan.cfg"}).code, 1);
    EXPECT_EQ(cli({"--jobs", "0", "run", "x"}).code, 1);
}

TEST(Cli, UnknownOverrideKeyRejected) {
    testsupport::TempDir dir("cli_typo");
    testsupport::write_file(dir.file("plan.cfg"), kPlan);
    const auto r = cli({"-o", dir.file("out"), "--set", "models.typo=1", "run", dir.file("plan.cfg")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("models.typo"), std::string::npos) << r.err;
}

TEST(Cli, RunTwiceIsByteIdenticalAndRerunsFromResolvedConfig) {
    testsupport::TempDir dir("cli_run");
    testsupport::write_file(dir.file("plan.cfg"), kPlan);
    ASSERT_EQ(cli({"-o", dir.file("a"), "run", dir.file("plan.cfg")}).code, 0);
    ASSERT_EQ(cli({"-o", dir.file("b"), "--jobs", "2", "run", dir.file("plan.cfg")}).code, 0);
    const std::string a = testsupport::read_file(dir.file("a/cells.csv"));
    EXPECT_EQ(a, testsupport::read_file(dir.file("b/cells.csv")));
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 1 + 2 * 4);
    for (const char* f : {"a/record.json", "a/charts/clitest.svg", "a/resolved.cfg", "a/models/data_logreg_none_1.model"})
        EXPECT_TRUE(std::filesystem::exists(dir.file(f))) << f;

    ASSERT_EQ(cli({"-o", dir.file("c"), "run", dir.file("a/resolved.cfg")}).code, 0);
    EXPECT_EQ(a, testsupport::read_file(dir.file("c/cells.csv")));
    auto hash = [&](const char* f) { return nlohmann::json::parse(testsupport::read_file(dir.file(f))).at("plan_hash"); };
    EXPECT_EQ(hash("a/record.json"), hash("c/record.json"));

    // A different seed changes the results.
    ASSERT_EQ(cli({"-o", dir.file("d"), "--seed", "6", "run", dir.file("plan.cfg")}).code, 0);
    EXPECT_NE(a, testsupport::read_file(dir.file("d/cells.csv")));
}

TEST(Cli, OutputDirectoryFromEnvironment) {
    testsupport::TempDir dir("cli_env");
    testsupport::write_file(dir.file("plan.cfg"), kPlan);
    ::setenv(kOutputEnv, dir.file("from_env").c_str(), 1);
    const auto r = cli({"--set", "models.kinds=dtree", "--set", "samplers.methods=none", "run", dir.file("plan.cfg")});
    ::unsetenv(kOutputEnv);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(std::filesystem::exists(dir.file("from_env/cells.csv")));
}

TEST(Cli, TrainThenEvaluate) {
    testsupport::TempDir dir("cli_train");
    testsupport::write_file(dir.file("plan.cfg"), kPlan);
    const auto t = cli({"-o", dir.file("t"), "--set", "models.kinds=logreg", "--set", "samplers.methods=none", "train",
                        dir.file("plan.cfg")});
    ASSERT_EQ(t.code, 0) << t.err;
    // Multiple models are not a single training run.
    EXPECT_EQ(cli({"-o", dir.file("t2"), "train", dir.file("plan.cfg")}).code, 1);

    testsupport::write_file(dir.file("spec.cfg"),
                            "[synthetic]\nn_rows = 300\nn_features = 6\nfraud_fraction = 0.1\nseparation = 2.5\n"
                            "seed = 9\noutput = eval.csv\n");
    ASSERT_EQ(cli({"-o", dir.file("g"), "gen-synth", dir.file("spec.cfg")}).code, 0);
    const auto e = cli({"-o", dir.file("e"), "evaluate", dir.file("t/models/data_logreg_none_1.model"), dir.file("g/eval.csv")});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_TRUE(std::filesystem::exists(dir.file("e/evaluation.json")));
}

TEST(Cli, ProfileAndExplore) {
    testsupport::TempDir dir("cli_profile");
    testsupport::write_file(dir.file("d.csv"), "a,b,Class\n1,2,0\n2,4,1\n3,5,0\n4,9,1\n");
    const auto p = cli({"-o", dir.file("p"), "profile", dir.file("d.csv")});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_TRUE(std::filesystem::exists(dir.file("p/profile.json")));
    const auto x = cli({"-o", dir.file("x"), "explore", dir.file("d.csv")});
    ASSERT_EQ(x.code, 0) << x.err;
    EXPECT_TRUE(std::filesystem::exists(dir.file("x/correlation.csv")));
    EXPECT_TRUE(std::filesystem::exists(dir.file("x/correlation.svg")));
    EXPECT_EQ(cli({"profile", dir.file("missing.csv")}).code, 1);
}
