#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "robit/io.hpp"

#ifndef ROBIT_CLI_PATH
#error "ROBIT_CLI_PATH must name the CLI binary"
#endif

namespace {

namespace fs = std::filesystem;
using namespace robit;

struct Result {
    int code = -1;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    static fs::path root() {
        static const fs::path dir = [] {
            auto p = fs::temp_directory_path() / ("robit_cli_test_" + std::to_string(::getpid()));
            fs::remove_all(p);
            fs::create_directories(p);
            return p;
        }();
        return dir;
    }

    static fs::path dir(const std::string& name) {
        auto p = root() / name;
        fs::create_directories(p);
        return p;
    }

    static Result run(const std::string& args) {
        const auto out = root() / "stdout.txt", err = root() / "stderr.txt";
        const std::string cmd = std::string(ROBIT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = io::read_file(out);
        r.err = io::read_file(err);
        return r;
    }

    /// Example I data (N = 300) with a fit configuration, shared by the tests.
    static fs::path simulated() {
        static const fs::path d = [] {
            auto p = dir("sim");
            const auto r = run("simulate --example 1 --n 300 --seed 7 --true-prob-draws 200 --elasticity-draws 50 --out " +
                               p.string());
            EXPECT_EQ(r.code, 0) << r.err;
            return p;
        }();
        return d;
    }

    static std::string fit_args(const std::string& extra) {
        return "fit --config " + (simulated() / "fit_config.json").string() +
               " --chains 2 --iterations 300 --warmup 100 --thin 2 " + extra;
    }

    /// Two-chain robit fit with a 10% holdout.
    static fs::path fitted() {
        static const fs::path d = [] {
            auto p = dir("fit");
            const auto r = run(fit_args("--holdout 0.1 --split-seed 3 --out " + p.string()));
            EXPECT_EQ(r.code, 0) << r.err;
            return p;
        }();
        return d;
    }
};

std::size_t data_lines(const std::string& text) {
    std::size_t n = 0;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        ++n;
    }
    return n;
}

TEST_F(Cli, SimulateWritesDataAndTruth) {
    const auto d = simulated();
    for (const char* f : {"data.csv", "truth.json", "true_probabilities.csv", "fit_config.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(d / f)) << f;
    const auto truth = io::Json::parse(io::read_file(d / "truth.json"));
    EXPECT_EQ(truth["truth"]["nu"][0].get<double>(), 2.0);
    EXPECT_EQ(truth["true_elasticities"].size(), 6u);
    EXPECT_EQ(data_lines(io::read_file(d / "data.csv")), 300u * 4u);
    const auto e = run("simulate --example 2 --n 50 --true-prob-draws 0 --elasticity-draws 0 --out " + dir("sim2").string());
    EXPECT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(io::Json::parse(io::read_file(dir("sim2") / "truth.json"))["kernel"], "genmnr");
}

TEST_F(Cli, MissingOutputDirectory) {
    const auto missing = (root() / "does_not_exist").string();
    const auto r = run("simulate --example 1 --n 10 --out " + missing);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(Cli, BadKernelListsValidKernels) {
    const auto r = run(fit_args("--kernel logit --out " + dir("bad").string()));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("mnp, mnr, genmnr"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorExitsTwo) {
    EXPECT_EQ(run("fit --chains").code, 2);
    EXPECT_EQ(run("nonsense").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, FitWritesTwoChainDraws) {
    const auto d = fitted();
    const auto draws = io::parse_draws_csv(io::read_file(d / "draws.csv"));
    EXPECT_EQ(draws.n_chains(), 2u);
    EXPECT_EQ(draws.n_retained(), 100u);
    EXPECT_EQ(draws.names.back(), "nu");
    EXPECT_FALSE(fs::exists(d / "draws.csv.partial"));
    const auto manifest = io::Json::parse(io::read_file(d / "manifest.json"));
    EXPECT_EQ(manifest["data"]["n_test"], 30);
    EXPECT_EQ(manifest["config"]["model"]["kernel"], "mnr");
    EXPECT_TRUE(fs::exists(d / "split.csv"));
}

TEST_F(Cli, GeneralisedRobitDrawsHaveThreeDof) {
    const auto d = dir("fit_gen");
    const auto r = run("fit --config " + (simulated() / "fit_config.json").string() +
                       " --kernel genmnr --iterations 40 --warmup 20 --thin 1 --out " + d.string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto draws = io::parse_draws_csv(io::read_file(d / "draws.csv"));
    const std::vector<std::string> tail(draws.names.end() - 3, draws.names.end());
    EXPECT_EQ(tail, (std::vector<std::string>{"nu_1", "nu_2", "nu_3"}));
}

TEST_F(Cli, AbortKeepsPartialDraws) {
    const auto d = dir("abort");
    std::string csv = "obs_id,alt_id,chosen,x\n";
    for (int i = 1; i <= 20; ++i)
        for (int j = 1; j <= 3; ++j)
            csv += std::to_string(i) + "," + std::to_string(j) + "," + (j == 1 + i % 3 ? "1" : "0") + "," +
                   (i == 5 && j == 1 ? "1e200" : std::to_string(0.1 * ((i * j) % 7))) + "\n";
    io::write_file(d / "data.csv", csv);
    const auto r = run("fit --data " + (d / "data.csv").string() +
                       " --asc 1 --asc 2 --kernel mnr --iterations 30 --warmup 10 --thin 1 --out " + d.string());
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_TRUE(fs::exists(d / "draws.csv"));
    EXPECT_TRUE(fs::exists(d / "draws.csv.partial"));
    EXPECT_NE(r.err.find("aborted at iteration"), std::string::npos) << r.err;
    EXPECT_EQ(run("summarize --fit " + d.string()).code, 2);
}

TEST_F(Cli, SummarizeAndDiagnose) {
    const auto d = fitted();
    const auto s = run("summarize --fit " + d.string() + " --wtp k5/k4");
    ASSERT_EQ(s.code, 0) << s.err;
    const auto csv = io::read_file(d / "summary.csv");
    const auto manifest_hash = io::manifest_hash(io::read_file(d / "manifest.json"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "# manifest=" + manifest_hash);
    EXPECT_EQ(data_lines(csv), 14u);
    EXPECT_TRUE(fs::exists(d / "wtp.csv"));
    const auto g = run("diagnose --fit " + d.string());
    EXPECT_TRUE(g.code == 0 || g.code == 1);
    EXPECT_EQ(data_lines(io::read_file(d / "rhat.csv")), 14u);
}

/// Fit directory with hand-written draws: two chains of one parameter.
fs::path fake_fit(const fs::path& d, double offset) {
    io::Json manifest = {{"config", io::config_to_json(io::RunConfig{})}};
    io::write_file(d / "manifest.json", manifest.dump());
    RngStream rng(5);
    std::string csv = "chain,iteration,x\n";
    for (int c = 1; c <= 2; ++c)
        for (int t = 1; t <= 2000; ++t)
            csv += std::to_string(c) + "," + std::to_string(t) + "," + io::format_double(rng.normal() + (c == 2 ? offset : 0.0)) + "\n";
    io::write_file(d / "draws.csv", csv);
    return d;
}

TEST_F(Cli, DiagnoseExitCodeFollowsRhat) {
    EXPECT_EQ(run("diagnose --fit " + fake_fit(dir("mixed"), 0.0).string()).code, 0);
    const auto r = run("diagnose --fit " + fake_fit(dir("split"), 5.0).string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("x"), std::string::npos);
}

TEST_F(Cli, ScoreOnHoldout) {
    const auto d = fitted();
    const auto r = run("score --fit " + d.string() + " --metric brier --posterior-draws 20 --error-draws 20");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("brier ", 0), 0u) << r.out;
    EXPECT_EQ(data_lines(io::read_file(d / "score.csv")), 30u);
    const auto q = run("score --fit " + d.string() + " --metric quadratic --truth " + (simulated() / "true_probabilities.csv").string() +
                       " --posterior-draws 20 --error-draws 20");
    ASSERT_EQ(q.code, 0) << q.err;
    EXPECT_EQ(run("score --fit " + d.string() + " --metric log").code, 2);
}

TEST_F(Cli, ElasticityScenarioRow) {
    const auto d = fitted();
    const auto r = run("elasticity --fit " + d.string() +
                       " --split all --scenario alt=2,attr=k4,change=+10% --posterior-draws 10 --error-draws 20");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = io::parse_csv(io::read_file(d / "elasticity.csv"));
    EXPECT_EQ(t.header, (std::vector<std::string>{"scenario", "1", "2", "3", "4"}));
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][0], "alt=2;attr=k4;change=+10%");
    EXPECT_EQ(run("elasticity --fit " + d.string() + " --scenario alt=9,attr=k4,change=+10%").code, 2);
}

TEST_F(Cli, PredictRejectsMismatchedDraws) {
    const auto src = fitted();
    const auto d = dir("mismatch");
    auto manifest = io::Json::parse(io::read_file(src / "manifest.json"));
    manifest["config"]["model"]["kernel"] = "mnp";
    io::write_file(d / "manifest.json", manifest.dump());
    fs::copy_file(src / "draws.csv", d / "draws.csv", fs::copy_options::overwrite_existing);
    const auto r = run("predict --fit " + d.string() + " --posterior-draws 5 --error-draws 5");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nu"), std::string::npos) << r.err;
}

TEST_F(Cli, PipelineIsByteReproducible) {
    std::string first;
    for (int pass = 0; pass < 2; ++pass) {
        const auto s = dir("repro_sim"), f = dir("repro_fit");
        ASSERT_EQ(run("simulate --example 2 --n 120 --seed 11 --true-prob-draws 50 --elasticity-draws 20 --out " + s.string()).code, 0);
        ASSERT_EQ(run("fit --config " + (s / "fit_config.json").string() +
                      " --chains 2 --iterations 60 --warmup 20 --thin 2 --holdout 0.1 --out " + f.string())
                      .code,
                  0);
        ASSERT_EQ(run("summarize --fit " + f.string()).code, 0);
        ASSERT_EQ(run("predict --fit " + f.string() + " --posterior-draws 10 --error-draws 10").code, 0);
        std::string all;
        for (const auto& p : {s / "data.csv", s / "truth.json", s / "true_probabilities.csv", f / "draws.csv",
                              f / "manifest.json", f / "summary.csv", f / "probabilities.csv"})
            all += io::hex64(io::fnv1a(io::read_file(p))) + "\n";
        if (pass == 0)
            first = all;
        else
            EXPECT_EQ(all, first);
        fs::remove_all(s);
        fs::remove_all(f);
    }
}

} // namespace
