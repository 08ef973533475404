#include "siftlab/cli.hpp"
#include "siftlab/error.hpp"
#include "siftlab/trace_io.hpp"

#include <gtest/gtest.h>

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace siftlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome siftlab_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "siftlab");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("siftlab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    json compare_rows(const std::string& out_dir) const {
        return json::parse(slurp(fs::path(out_dir) / "compare.json"))["rows"];
    }

    fs::path dir_;
};

}  // namespace

// ---------------------------------------------------------------------------
// gen-trace

TEST_F(CliTest, GenTracePowerLaw) {
    const Outcome r = siftlab_cli({"gen-trace", "--steps", "4096", "--alpha", "2", "--beta", "0.7", "--noise", "0.1",
                                   "--seed", "42", "--out", path("t.trc")});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const AttentionTrace t = read_trace(path("t.trc"));
    EXPECT_EQ(t.header.num_steps, 4096U);
    EXPECT_EQ(t.header.record_kind, RecordKind::kQuantiles);
    EXPECT_EQ(t.header.quantile_levels, (std::vector<double>{0.5}));
    EXPECT_NE(r.out.find("num_steps:   4096"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("clamped to 1"), std::string::npos) << r.out;
}

TEST_F(CliTest, GenTraceIsDeterministic) {
    for (const char* kind : {"powerlaw", "scores", "matched"}) {
        const std::vector<std::string> common = {"gen-trace", "--kind", kind, "--steps", "300", "--seed", "9"};
        auto a = common;
        a.insert(a.end(), {"--out", path("a.trc")});
        auto b = common;
        b.insert(b.end(), {"--out", path("b.trc")});
        ASSERT_EQ(siftlab_cli(a).code, 0);
        ASSERT_EQ(siftlab_cli(b).code, 0);
        EXPECT_EQ(slurp(path("a.trc")), slurp(path("b.trc"))) << kind;
    }
}

TEST_F(CliTest, GenTraceMatchedRecordsTarget) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--kind", "matched", "--tau", "0.875", "--beta", "1.2", "--steps", "200", "--layer", "3",
                           "--head", "5", "--out", path("m.trc")})
                  .code,
              0);
    const AttentionTrace t = read_trace(path("m.trc"));
    EXPECT_EQ(t.header.extra["target_tau"], 0.875);
    EXPECT_EQ(t.header.extra["first_exact_step"], 9);
    EXPECT_EQ(t.header.layer, 3U);
    EXPECT_EQ(t.header.head, 5U);
    EXPECT_EQ(t.header.dataset, "quantile-matched");
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(siftlab_cli({"gen-trace", "--steps", "10"}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"gen-trace", "--kind", "bogus", "--out", path("x")}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"gen-trace", "--steps", "ten", "--out", path("x")}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"fit"}).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"--help"}).code, cli::kExitOk);
}

// ---------------------------------------------------------------------------
// fit

TEST_F(CliTest, FitNoiselessTraceIsPerfect) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--steps", "600", "--alpha", "0.9", "--beta", "0.6", "--out",
                           path("n.trc")})
                  .code,
              0);
    const Outcome r = siftlab_cli({"fit", "--trace", path("n.trc"), "--taus", "0.5", "--out", path("fit.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json report = json::parse(slurp(path("fit.json")));
    EXPECT_EQ(report["schema"], "siftlab.fit.v1");
    const json& fits = report["traces"][0]["fits"];
    ASSERT_EQ(fits.size(), 5U);  // full fit plus four warmups
    for (const auto& f : fits) {
        // Stored as f32, so "exact" means within float rounding.
        EXPECT_NEAR(f["r2"].get<double>(), 1.0, 1e-9) << f.dump();
        EXPECT_NEAR(f["beta"].get<double>(), 0.6, 1e-6);
    }
}

TEST_F(CliTest, FitCoversEveryRequestedPair) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--kind", "scores", "--steps", "300", "--seed", "4", "--out", path("s.trc")})
                  .code,
              0);
    const Outcome r =
        siftlab_cli({"fit", "--trace", path("s.trc"), "--taus", "0.25,0.5,0.9", "--warmups", "16,32,64,128"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json report = json::parse(r.out);
    std::set<std::pair<double, int>> seen;
    for (const auto& f : report["traces"][0]["fits"]) {
        seen.insert({f["tau"].get<double>(), f["warmup"].is_null() ? 0 : f["warmup"].get<int>()});
    }
    for (double tau : {0.25, 0.5, 0.9}) {
        for (int w : {0, 16, 32, 64, 128}) {
            EXPECT_EQ(seen.count({tau, w}), 1U) << tau << " " << w;
        }
    }
    EXPECT_EQ(report["summary"].size(), 15U);
    EXPECT_TRUE(report["traces"][0]["skipped"].empty());
}

TEST_F(CliTest, FitSkipsUnrecordedLevels) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--steps", "100", "--out", path("p.trc")}).code, 0);
    const Outcome r = siftlab_cli({"fit", "--trace", path("p.trc"), "--warmups", "64,128"});
    ASSERT_EQ(r.code, 0) << r.err;
    const json report = json::parse(r.out);
    // Only tau 0.5 is recorded; 0.75 and 0.875 are skipped, as is w = 128 >= steps.
    EXPECT_EQ(report["traces"][0]["fits"].size(), 2U);
    EXPECT_EQ(report["traces"][0]["skipped"].size(), 3U);
}

TEST_F(CliTest, FitErrorsMapToExitCodes) {
    write("junk.trc", "definitely not a trace");
    const Outcome bad = siftlab_cli({"fit", "--trace", path("junk.trc")});
    EXPECT_EQ(bad.code, cli::kExitFormat);
    EXPECT_NE(bad.err.find("at byte 0"), std::string::npos) << bad.err;
    EXPECT_EQ(siftlab_cli({"fit", "--trace", path("missing.trc")}).code, cli::kExitIo);
}

// ---------------------------------------------------------------------------
// compare

TEST_F(CliTest, CompareFullAndTopKAgree) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--kind", "scores", "--steps", "200", "--out", path("s.trc")}).code, 0);
    const Outcome r = siftlab_cli({"compare", "--trace", path("s.trc"), "--engines", "full,topk", "--k-fractions",
                                   "1.0", "--head-dim", "16", "--out-dir", path("out")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json rows = compare_rows(path("out"));
    ASSERT_EQ(rows.size(), 2U);
    for (const auto& row : rows) {
        EXPECT_EQ(row["mean_rel_l2_error"], 0.0) << row.dump();
        EXPECT_EQ(row["realized_sparsity"], 0.0);
        EXPECT_EQ(row["value_bytes_loaded"], row["value_bytes_full"]);
    }
    const std::string csv = slurp(fs::path(path("out")) / "compare.csv");
    EXPECT_EQ(csv.rfind("# siftlab compare v1\nengine,label,", 0), 0U) << csv;
}

TEST_F(CliTest, CompareFixedThresholdBelowMinimum) {
    const Outcome r = siftlab_cli({"compare", "--synthetic", "--steps", "150", "--head-dim", "16", "--engines",
                                   "sift", "--taus", "0.5", "--warmups", "32", "--sift-fixed-threshold", "1e-300",
                                   "--out-dir", path("out")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json row = compare_rows(path("out"))[0];
    EXPECT_EQ(row["realized_sparsity"], 0.0);
    EXPECT_LT(row["mean_rel_l2_error"].get<double>(), 1e-12);
}

TEST_F(CliTest, CompareMatchedTraceHitsTau) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--kind", "matched", "--tau", "0.875", "--beta", "1.2", "--steps", "2048", "--seed", "1",
                           "--out", path("m.trc")})
                  .code,
              0);
    const Outcome r = siftlab_cli({"compare", "--trace", path("m.trc"), "--engines", "sift,topk,evict", "--taus",
                                   "0.875", "--warmups", "512", "--fit-skip", "16", "--k-fractions", "0.125",
                                   "--budgets", "0.125", "--recent-fraction", "0.02", "--eval-from", "513",
                                   "--head-dim", "16", "--out-dir", path("out")});
    ASSERT_EQ(r.code, 0) << r.err;
    const json rows = compare_rows(path("out"));
    ASSERT_EQ(rows.size(), 3U);
    EXPECT_EQ(rows[0]["label"], "sift(tau=0.875,w=512)");
    EXPECT_NEAR(rows[0]["realized_sparsity"].get<double>(), 0.875, 0.02);
    EXPECT_EQ(rows[0]["steps_evaluated"], 2048 - 512);
    EXPECT_NEAR(rows[1]["realized_sparsity"].get<double>(), 0.875, 0.002);
    EXPECT_NEAR(rows[2]["realized_sparsity"].get<double>(), 0.875, 0.002);
}

TEST_F(CliTest, CompareIsByteDeterministic) {
    const std::vector<std::string> base = {"compare", "--synthetic", "--steps", "120", "--head-dim", "8",
                                           "--engines", "full,topk,sift,evict", "--k-fractions", "0.25,0.5",
                                           "--taus", "0.5,0.75", "--warmups", "16,32", "--budgets", "0.3",
                                           "--threads", "3"};
    auto a = base;
    a.insert(a.end(), {"--out-dir", path("a")});
    auto b = base;
    b.insert(b.end(), {"--out-dir", path("b")});
    ASSERT_EQ(siftlab_cli(a).code, 0);
    ASSERT_EQ(siftlab_cli(b).code, 0);
    EXPECT_EQ(slurp(fs::path(path("a")) / "compare.csv"), slurp(fs::path(path("b")) / "compare.csv"));
    EXPECT_EQ(compare_rows(path("a")).size(), 1U + 2U + 4U + 1U);
}

TEST_F(CliTest, CompareMissingEngineParameterIsUsageError) {
    const std::vector<std::string> src = {"compare", "--synthetic", "--steps", "20", "--out-dir", path("o")};
    auto topk = src;
    topk.insert(topk.end(), {"--engines", "topk"});
    EXPECT_EQ(siftlab_cli(topk).code, cli::kExitUsage);
    auto sift = src;
    sift.insert(sift.end(), {"--engines", "sift", "--taus", "0.5"});
    EXPECT_EQ(siftlab_cli(sift).code, cli::kExitUsage);
    auto evict = src;
    evict.insert(evict.end(), {"--engines", "evict"});
    EXPECT_EQ(siftlab_cli(evict).code, cli::kExitUsage);
    auto bad_tau = src;
    bad_tau.insert(bad_tau.end(), {"--engines", "sift", "--taus", "1.5", "--warmups", "8"});
    EXPECT_EQ(siftlab_cli(bad_tau).code, cli::kExitUsage);
    EXPECT_EQ(siftlab_cli({"compare", "--engines", "full"}).code, cli::kExitUsage);  // no source
    EXPECT_FALSE(fs::exists(path("o")));
}

TEST_F(CliTest, ComparePrecedenceFlagsConfigEnv) {
    write("cfg.json", R"({"synthetic": true, "steps": 30, "head-dim": 4, "engines": ["topk"],
                          "k-fractions": [0.5], "out-dir": ")" + path("from_config") + R"("})");
    ::setenv("SIFTLAB_OUT_DIR", path("from_env").c_str(), 1);

    // config beats env
    ASSERT_EQ(siftlab_cli({"compare", "--config", path("cfg.json")}).code, 0);
    EXPECT_TRUE(fs::exists(fs::path(path("from_config")) / "compare.csv"));
    EXPECT_FALSE(fs::exists(path("from_env")));

    // flags beat config
    ASSERT_EQ(siftlab_cli({"compare", "--config", path("cfg.json"), "--k-fractions", "0.25", "--out-dir",
                           path("from_flag")})
                  .code,
              0);
    EXPECT_EQ(compare_rows(path("from_flag"))[0]["k_fraction"], 0.25);
    EXPECT_EQ(compare_rows(path("from_config"))[0]["k_fraction"], 0.5);

    // env beats the default when neither flag nor config names a directory
    write("noout.json", R"({"synthetic": true, "steps": 30, "head-dim": 4, "engines": "full"})");
    ASSERT_EQ(siftlab_cli({"compare", "--config", path("noout.json")}).code, 0);
    EXPECT_TRUE(fs::exists(fs::path(path("from_env")) / "compare.json"));
    ::unsetenv("SIFTLAB_OUT_DIR");

    write("broken.json", "{ not json");
    EXPECT_EQ(siftlab_cli({"compare", "--config", path("broken.json")}).code, cli::kExitUsage);
}

TEST_F(CliTest, GenTraceConfigFile) {
    write("gen.json", R"({"steps": 50, "kind": "scores", "seed": 3, "out": ")" + path("g.trc") + R"("})");
    ASSERT_EQ(siftlab_cli({"gen-trace", "--config", path("gen.json"), "--steps", "40"}).code, 0);
    EXPECT_EQ(read_trace(path("g.trc")).header.num_steps, 40U);
}

// ---------------------------------------------------------------------------
// mask

TEST_F(CliTest, MaskFullIsLowerTriangular) {
    ASSERT_EQ(siftlab_cli({"mask", "--synthetic", "--steps", "5", "--head-dim", "4", "--engine", "full", "--out",
                           path("m.csv")})
                  .code,
              0);
    EXPECT_EQ(slurp(path("m.csv")), "1,0,0,0,0\n1,1,0,0,0\n1,1,1,0,0\n1,1,1,1,0\n1,1,1,1,1\n");
}

TEST_F(CliTest, MaskSingleStepAndPbm) {
    ASSERT_EQ(siftlab_cli({"gen-trace", "--kind", "scores", "--steps", "64", "--out", path("s.trc")}).code, 0);
    ASSERT_EQ(siftlab_cli({"mask", "--trace", path("s.trc"), "--engine", "topk", "--k-fraction", "0.001", "--step",
                           "64", "--format", "pbm", "--out", path("m.pbm")})
                  .code,
              0);
    const std::string pbm = slurp(path("m.pbm"));
    EXPECT_EQ(pbm.rfind("P1\n64 1\n", 0), 0U) << pbm;
    EXPECT_EQ(std::count(pbm.begin(), pbm.end(), '0'), 1);  // one attended key, drawn white
}

TEST_F(CliTest, MaskStepBeyondRunIsIndexError) {
    const Outcome r = siftlab_cli({"mask", "--synthetic", "--steps", "10", "--head-dim", "4", "--engine", "full",
                                   "--step", "11", "--out", path("m.csv")});
    EXPECT_EQ(r.code, cli::kExitRuntime);
    EXPECT_NE(r.err.find("--step 11"), std::string::npos) << r.err;
}
