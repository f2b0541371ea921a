// End-to-end checks against the built CLI binary (path via SPATTEN_CLI_BIN).

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

std::string cli_bin() {
    const char* bin = std::getenv("SPATTEN_CLI_BIN");
    if (bin == nullptr) throw std::runtime_error("SPATTEN_CLI_BIN not set");
    return bin;
}

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args, const std::string& extra_env = "") {
    const fs::path out = fs::temp_directory_path() / "spatten_cli_out.txt";
    const std::string cmd = extra_env + cli_bin() + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream is(out);
    std::stringstream ss;
    ss << is.rdbuf();
    r.output = ss.str();
    return r;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / "spatten_cli_test";
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, MissingPresetNamesTheFlagAndExits2) {
    CmdResult r = run_cli("simulate --no-breakdown");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find("--preset"), std::string::npos);
}

TEST_F(CliTest, UnknownPresetExits2) {
    CmdResult r = run_cli("simulate --preset bort-tiny");
    EXPECT_EQ(r.exit_code, 2);
}

TEST_F(CliTest, SimulateWritesReportAndEchoesTokenKeep) {
    const fs::path report = dir_ / "report.json";
    const fs::path stages = dir_ / "stages.csv";
    CmdResult r = run_cli("simulate --preset gpt2-small --gen-steps 4 --token-keep 0.26"
                          " --pq 8+4 --threshold 0.1 --pq-flat-rate 0.059 --no-breakdown"
                          " --report " + report.string() + " --stages-csv " + stages.string());
    ASSERT_EQ(r.exit_code, 0) << r.output;

    std::ifstream is(report);
    ASSERT_TRUE(is.good());
    nlohmann::json j;
    is >> j;
    EXPECT_NEAR(j["pruning_summary"]["token_keep_avg"].get<double>(), 0.26, 0.01);
    EXPECT_GT(j["total_cycles"].get<std::uint64_t>(), 0u);
    EXPECT_GT(j["pq_stats"]["rows_refetched"].get<std::uint64_t>(), 0u);

    std::ifstream cs(stages);
    std::string header;
    std::getline(cs, header);
    EXPECT_EQ(header, "layer,step,head,query,fetch,qk,softmax,topk,pv");
}

TEST_F(CliTest, NoPruneNoPqBreakdownRatiosAreOne) {
    const fs::path report = dir_ / "flat.json";
    CmdResult r = run_cli("simulate --preset gpt2-small --gen-steps 2 --no-prune --no-pq"
                          " --report " + report.string() + " --stages-csv ''");
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::ifstream is(report);
    nlohmann::json j;
    is >> j;
    const auto bd = j["breakdown"];
    const auto base = bd["datapath_only"].get<std::uint64_t>();
    EXPECT_EQ(bd["with_pruning"].get<std::uint64_t>(), base);
    EXPECT_EQ(bd["with_parallel_topk"].get<std::uint64_t>(), base);
    EXPECT_EQ(bd["with_pq"].get<std::uint64_t>(), base);
}

TEST_F(CliTest, ConfigFileDrivesRunAndFlagsWin) {
    const fs::path cfg = dir_ / "run.cfg";
    {
        std::ofstream os(cfg);
        os << "# canonical generation run\n"
           << "preset=gpt2-small\n"
           << "gen_steps=2\n"
           << "token_keep_avg=0.5\n"
           << "seed=7\n";
    }
    const fs::path report = dir_ / "cfg.json";
    CmdResult r = run_cli("simulate --config " + cfg.string() + " --token-keep 0.26" +
                          " --no-breakdown --report " + report.string() + " --stages-csv ''");
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::ifstream is(report);
    nlohmann::json j;
    is >> j;
    EXPECT_NEAR(j["pruning_summary"]["token_keep_avg"].get<double>(), 0.26, 0.01);
}

TEST_F(CliTest, MalformedConfigIsLineAnchored) {
    const fs::path cfg = dir_ / "bad.cfg";
    {
        std::ofstream os(cfg);
        os << "preset=gpt2-small\n"
           << "no_such_key=1\n";
    }
    CmdResult r = run_cli("simulate --config " + cfg.string());
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.output.find(":2:"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("no_such_key"), std::string::npos);
}

TEST_F(CliTest, EnvSeedOverridesFlag) {
    const fs::path a = dir_ / "a.csv";
    const fs::path b = dir_ / "b.csv";
    ASSERT_EQ(run_cli("simulate --preset gpt2-small --gen-steps 2 --token-keep 0.5 --seed 1"
                      " --no-breakdown --report '' --stages-csv '' --dump-importance " +
                      a.string()).exit_code,
              0);
    ASSERT_EQ(run_cli("simulate --preset gpt2-small --gen-steps 2 --token-keep 0.5 --seed 1"
                      " --no-breakdown --report '' --stages-csv '' --dump-importance " +
                          b.string(),
                      "SPATTEN_SEED=99 ").exit_code,
              0);
    std::ifstream ia(a), ib(b);
    std::stringstream sa, sb;
    sa << ia.rdbuf();
    sb << ib.rdbuf();
    EXPECT_NE(sa.str(), sb.str());  // different seed, different importance trace
}

TEST_F(CliTest, EmptySweepGridIsHeaderOnly) {
    const fs::path out = dir_ / "sweep.csv";
    CmdResult r = run_cli("sweep --preset gpt2-small --gen-steps 2 --out " + out.string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::ifstream is(out);
    std::string header, extra;
    ASSERT_TRUE(static_cast<bool>(std::getline(is, header)));
    EXPECT_FALSE(static_cast<bool>(std::getline(is, extra)));
    EXPECT_NE(header.find("total_cycles"), std::string::npos);
}

TEST_F(CliTest, SweepCrossProductRowsAndMonotonicP) {
    const fs::path out = dir_ / "psweep.csv";
    CmdResult r = run_cli(
        "sweep --preset gpt2-small --gen-steps 2 --token-keep 0.26 --head-keep 0.9 --v-keep 0.5"
        " --sweep-p 1,4,16 --out " + out.string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
    std::ifstream is(out);
    std::string line;
    std::getline(is, line);  // header
    std::vector<std::uint64_t> cycles;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string field;
        for (int i = 0; i < 9; ++i) std::getline(ss, field, ',');
        cycles.push_back(std::stoull(field));
    }
    ASSERT_EQ(cycles.size(), 3u);
    EXPECT_GE(cycles[0], cycles[1]);
    EXPECT_GE(cycles[1], cycles[2]);
}

TEST_F(CliTest, VerifyRejectsUnknownFault) {
    CmdResult r = run_cli("verify --inject-fault frobnicate");
    EXPECT_EQ(r.exit_code, 2);
}
