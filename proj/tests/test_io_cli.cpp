#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "minfo/io.hpp"
#include "oracles.hpp"

using namespace minfo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(MINFO_CLI) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    fs::path dir;
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("minfo_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string at(const std::string& name) const { return (dir / name).string(); }
};

bool same_tables(const PeriodicPomdpModel& a, const PeriodicPomdpModel& b) {
    if (a.num_phases() != b.num_phases() || a.phases_per_step() != b.phases_per_step()) return false;
    for (std::size_t t = 0; t < a.num_phases(); ++t) {
        const auto &x = a.phase(t), &y = b.phase(t);
        if (x.observation() != y.observation() || x.cost() != y.cost() || a.allowed(t) != b.allowed(t)) return false;
        for (std::size_t u = 0; u < x.num_actions(); ++u)
            if (x.transition(u) != y.transition(u)) return false;
    }
    return a.state_labels() == b.state_labels() && a.obs_labels() == b.obs_labels() &&
           a.action_labels() == b.action_labels();
}

}  // namespace

TEST(Json, ModelRoundTrip) {
    for (const auto& name : builtins::names()) {
        const PeriodicPomdpModel m = *builtins::by_name(name);
        const auto back = io::model_from_json(json::parse(io::model_to_json(m).dump()));
        EXPECT_TRUE(same_tables(m, back)) << name;
    }
}

TEST(Json, PeriodicModelRoundTrip) {
    std::ifstream in(std::string(MINFO_SAMPLES) + "/alternating_memory.json");
    const auto setup = io::setup_from_json(json::parse(in));
    const auto reduced = build_reduced_pomdp(setup).model;
    const auto back = io::model_from_json(json::parse(io::model_to_json(reduced).dump()));
    EXPECT_TRUE(same_tables(reduced, back));
    EXPECT_EQ(back.phases_per_step(), 2);
}

TEST(Json, SetupAndPolicyRoundTrip) {
    std::ifstream in(std::string(MINFO_SAMPLES) + "/alternating_memory.json");
    const auto setup = io::setup_from_json(json::parse(in));
    const auto back = io::setup_from_json(json::parse(io::setup_to_json(setup).dump()));
    EXPECT_EQ(back.memory, setup.memory);
    EXPECT_TRUE(back.control == setup.control);
    ASSERT_EQ(back.inference.size(), 2u);
    EXPECT_TRUE(back.inference[1] == setup.inference[1]);

    const PeriodicPomdpModel robot = builtins::robot();
    std::mt19937_64 rng(3);
    const ReactivePolicy pi({oracle::random_kernel(rng, 4, 4), oracle::random_kernel(rng, 4, 4)});
    const auto pb = io::policy_from_json(json::parse(io::policy_to_json(robot, pi).dump()));
    ASSERT_EQ(pb.period(), 2u);
    for (std::size_t t = 0; t < 2; ++t) EXPECT_LT((pb.kernel(t) - pi.kernel(t)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Json, ValidationErrorsNameTheField) {
    auto j = io::model_to_json(builtins::two_state());
    j["transition"][0][1] = {0.5, 0.6};
    try {
        io::model_from_json(j);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("s=L"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("a=right"), std::string::npos) << e.what();
    }
    j = io::model_to_json(builtins::two_state());
    j.erase("cost");
    EXPECT_THROW(io::model_from_json(j), ValidationError);
    EXPECT_THROW(io::load_model("builtin:nosuch"), ValidationError);
}

TEST(Json, NonFiniteNumbersBecomeNull) {
    RolloutStats st;
    st.standard_error = std::numeric_limits<double>::infinity();
    EXPECT_TRUE(io::rollout_to_json(st)["standard_error"].is_null());
}

TEST_F(Cli, SolveBelowBifurcation) {
    const auto r = run("solve --model builtin:two-state --beta 0.5 --out " + at("a"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto report = io::read_json_file(at("a/report.json"));
    EXPECT_EQ(report["detected_period"], 1);
    EXPECT_EQ(report["converged"], true);
    EXPECT_NO_THROW(io::policy_from_json(io::read_json_file(at("a/policy.json"))));
}

TEST_F(Cli, SolveAboveBifurcation) {
    const auto r = run("solve --model builtin:two-state --beta 4 --seed 7 --out " + at("b"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(io::read_json_file(at("b/report.json"))["detected_period"], 2);
    EXPECT_NE(r.output.find("period=2"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run("solve --model builtin:two-state --beta -1 --out " + at("c")).code, 1);
    EXPECT_EQ(run("solve --model builtin:two-state --beta 0 --out " + at("c")).code, 1);
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("solve --beta 1").code, 1);
}

TEST_F(Cli, NonConvergenceExitCode) {
    const auto r = run("solve --model builtin:robot --beta 30 --max-iterations 1 --out " + at("d"));
    EXPECT_EQ(r.code, 3) << r.output;
    EXPECT_EQ(io::read_json_file(at("d/report.json"))["converged"], false);
}

TEST_F(Cli, ExamplesValidateAndRoundTrip) {
    ASSERT_EQ(run("example two-state --out " + at("two.json")).code, 0);
    ASSERT_EQ(run("example robot --out " + at("robot.json")).code, 0);
    const auto two = io::load_model(at("two.json"));
    EXPECT_EQ(two.num_states(), 2u);
    EXPECT_EQ(two.num_observations(), 1u);
    EXPECT_EQ(two.num_actions(), 2u);
    const auto robot = io::load_model(at("robot.json"));
    EXPECT_EQ(robot.num_states(), 4u);
    EXPECT_EQ(robot.num_observations(), 4u);
    EXPECT_EQ(robot.num_actions(), 4u);
    EXPECT_TRUE(same_tables(robot, builtins::robot()));

    const auto r = run("solve --model " + at("two.json") + " --beta 0.5 --out " + at("rt"));
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.output.find("warning"), std::string::npos) << r.output;

    const auto printed = run("example two-state");
    EXPECT_EQ(json::parse(printed.output), json::parse(slurp(at("two.json"))));
}

TEST_F(Cli, UnknownExampleListsNames) {
    const auto r = run("example nosuch");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("two-state"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("robot"), std::string::npos) << r.output;
}

TEST_F(Cli, InvalidModelFileIsAValidationError) {
    auto j = io::model_to_json(builtins::two_state());
    j["observation"][1] = {0.4};
    io::write_json_file(at("bad.json"), j);
    const auto r = run("solve --model " + at("bad.json") + " --beta 1 --out " + at("e"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("observation"), std::string::npos) << r.output;
    EXPECT_EQ(run("solve --model " + at("missing.json") + " --out " + at("e")).code, 2);
}

TEST_F(Cli, SweepWritesBothTables) {
    const auto r = run("sweep --model builtin:two-state --beta-min 0.5 --beta-max 2 --beta-steps 16 --out " + at("s"));
    ASSERT_EQ(r.code, 0) << r.output;
    std::istringstream ev(slurp(at("s/bifurcations.csv")));
    std::string header, row;
    std::getline(ev, header);
    EXPECT_EQ(header, "beta_low,beta_high,period_before,period_after");
    ASSERT_TRUE(std::getline(ev, row));
    double lo = 0, hi = 0;
    int before = 0, after = 0;
    ASSERT_EQ(std::sscanf(row.c_str(), "%lf,%lf,%d,%d", &lo, &hi, &before, &after), 4);
    EXPECT_LE(lo, 1.0);
    EXPECT_GE(hi, 1.0);
    EXPECT_EQ(before, 1);
    EXPECT_EQ(after, 2);
    EXPECT_FALSE(std::getline(ev, row));

    std::istringstream sw(slurp(at("s/sweep.csv")));
    std::size_t rows = 0;
    while (std::getline(sw, row)) ++rows;
    EXPECT_EQ(rows, 17u);
}

TEST_F(Cli, SinglePointSweep) {
    ASSERT_EQ(run("sweep --model builtin:robot --beta-min 2 --beta-max 2 --beta-steps 1 --out " + at("p")).code, 0);
    EXPECT_EQ(slurp(at("p/bifurcations.csv")), "beta_low,beta_high,period_before,period_after\n");
    std::istringstream sw(slurp(at("p/sweep.csv")));
    std::string row;
    std::size_t rows = 0;
    while (std::getline(sw, row)) ++rows;
    EXPECT_EQ(rows, 2u);
}

TEST_F(Cli, OutputsAreByteIdentical) {
    for (const char* sub : {"x", "y"}) {
        ASSERT_EQ(run(std::string("solve --model builtin:robot --beta 6 --seed 3 --out ") + at(sub)).code, 0);
        ASSERT_EQ(run(std::string("sweep --model builtin:two-state --beta-steps 8 --cold --out ") + at(sub)).code, 0);
    }
    for (const char* f : {"report.json", "policy.json", "sweep.csv", "bifurcations.csv"})
        EXPECT_EQ(slurp(dir / "x" / f), slurp(dir / "y" / f)) << f;
}

TEST_F(Cli, WarmStartFromPolicyFile) {
    ASSERT_EQ(run("solve --model builtin:two-state --beta 3 --out " + at("w1")).code, 0);
    const auto r = run("solve --model builtin:two-state --beta 3 --perturbation 0 --policy " + at("w1/policy.json") +
                       " --out " + at("w2"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NEAR(io::read_json_file(at("w2/report.json"))["free_energy"].get<double>(),
                io::read_json_file(at("w1/report.json"))["free_energy"].get<double>(), 1e-10);
}

TEST_F(Cli, ReduceSampleSetup) {
    const auto r = run("reduce --setup " + std::string(MINFO_SAMPLES) + "/alternating_memory.json --out " + at("r"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto eq = io::read_json_file(at("r/equivalence.json"));
    EXPECT_LT(eq["deviation"].get<double>(), 1e-12);
    EXPECT_NEAR(eq["retentive_cost_per_step"].get<double>(), -1.0, 1e-12);
    const auto reduced = io::load_model(at("r/reduced_model.json"));
    EXPECT_EQ(reduced.num_phases(), 2u);
    EXPECT_EQ(reduced.num_states(), 4u);
    const auto pi = io::policy_from_json(io::read_json_file(at("r/embedded_policy.json")));
    EXPECT_NO_THROW(check_policy(reduced, pi));
}

TEST_F(Cli, SimulateWritesRollout) {
    const auto r = run("simulate --model builtin:two-state --beta 4 --steps 100000 --rollout-seed 5 --out " + at("m"));
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = io::read_json_file(at("m/rollout.json"));
    EXPECT_EQ(j["rollout"]["steps"], 100000);
    EXPECT_LE(std::abs(j["crosscheck"]["cost_z"].get<double>()), 3.0);
}

TEST_F(Cli, SampleModelSolves) {
    const auto r = run("solve --model " + std::string(MINFO_SAMPLES) + "/noisy_corridor.json --beta 2 --out " + at("n"));
    EXPECT_EQ(r.code, 0) << r.output;
}
