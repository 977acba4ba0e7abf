#include <xrdphase/io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include <sys/wait.h>
#include <unistd.h>

using namespace xrdphase;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("xrdphase_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "cfg.json") << R"({"seed": 3, "max_samples": 120, "wafer_radius_mm": 14,
            "boundary_band": 0.1, "noise_sigma": 1,
            "phases": [{"peak_q": [1.5, 3.0], "amplitudes": [100, 100]},
                       {"peak_q": [2.0, 3.6], "amplitudes": [100, 100]},
                       {"peak_q": [2.6], "amplitudes": [100]}]})";
    }

    void TearDown() override { fs::remove_all(dir_); }

    CliRun run(const std::string& args) {
        const std::string cmd = "cd '" + dir_.string() + "' && '" XRDPHASE_CLI_PATH "' " + args + " >out.txt 2>err.txt";
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(dir_ / "out.txt");
        r.err = slurp(dir_ / "err.txt");
        return r;
    }

    void expect_ok(const std::string& args) {
        const CliRun r = run(args);
        EXPECT_EQ(r.code, 0) << args << "\n" << r.err;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, FullPipelineSucceeds) {
    expect_ok("synth --config cfg.json --out s");
    ASSERT_TRUE(fs::exists(dir_ / "s/dataset.csv"));
    ASSERT_TRUE(fs::exists(dir_ / "s/truth.json"));
    expect_ok("binarize --in s/dataset.csv --threshold 40 --windows 100 --out p.json");
    expect_ok("map --in p.json --th 2 --ot 3 --out r.json");
    expect_ok("merge --in r.json --cutoff 1 --timestamp 2020-01-01T00:00:00Z --out m.csv");
    expect_ok("merge --in m.csv --ids P0,P1 --timestamp 2020-01-01T00:00:01Z --out m2.json");
    expect_ok("baseline --in s/dataset.csv --truth s/truth.json --method kmeans --param 2,3 --out b.csv");
    expect_ok("baseline --in s/dataset.csv --truth s/truth.json --metric emd --param 10,1 --out b.json");
    expect_ok("plot --result m2.json --dataset s/dataset.csv --out plots");

    const auto r = import_result(dir_ / "r.json");
    EXPECT_EQ(r.catalog.size(), 3u);
    const auto m2 = import_result(dir_ / "m2.json");
    EXPECT_EQ(m2.catalog.size(), 2u);
    ASSERT_EQ(m2.lineage.size(), 2u);
    EXPECT_EQ(m2.lineage[0].op, "hierarchical_merge");
    EXPECT_EQ(m2.lineage[1].op, "manual_merge");
    EXPECT_EQ(m2.lineage[1].actor, "cli");
    for (const char* f : {"wafer.svg", "ternary.svg", "peaks.svg", "plot_data.json"})
        EXPECT_TRUE(fs::exists(dir_ / "plots" / f)) << f;
    const json report = json::parse(slurp(dir_ / "b.json"));
    EXPECT_EQ(report["rows"].size(), 2u);
}

TEST_F(CliTest, SynthIsDeterministicForASeed) {
    expect_ok("synth --config cfg.json --seed 8 --out a");
    expect_ok("synth --config cfg.json --seed 8 --out b");
    expect_ok("synth --config cfg.json --seed 9 --out c");
    EXPECT_EQ(slurp(dir_ / "a/dataset.csv"), slurp(dir_ / "b/dataset.csv"));
    EXPECT_NE(slurp(dir_ / "a/dataset.csv"), slurp(dir_ / "c/dataset.csv"));
}

TEST_F(CliTest, ValidationErrorsExitWithOne) {
    expect_ok("synth --config cfg.json --out s");
    expect_ok("binarize --in s/dataset.csv --threshold 40 --windows 100 --out p.json");
    expect_ok("map --in p.json --th 2 --ot 3 --out r.json");

    CliRun r = run("merge --in r.json --ids P0");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("two distinct"), std::string::npos) << r.err;

    EXPECT_EQ(run("merge --in r.json --ids P0,P42").code, 1);
    EXPECT_EQ(run("binarize --in s/dataset.csv --threshold -1").code, 1);
    EXPECT_EQ(run("map --in p.json --th 100 --ot 1").code, 1);
    EXPECT_EQ(run("map --in p.json --th 1 --ot 0").code, 1);

    // Patterns of different widths cannot be mapped together.
    json p = json::parse(slurp(dir_ / "p.json"));
    p["patterns"][0]["bits"] = std::string(99, '0');
    std::ofstream(dir_ / "mixed.json") << p.dump();
    r = run("map --in mixed.json --th 1 --ot 1");
    EXPECT_EQ(r.code, 1) << r.err;

    std::ofstream(dir_ / "bad.json") << R"({"seed": 1, "phases": []})";
    EXPECT_EQ(run("synth --config bad.json --out x").code, 1);

    std::ofstream(dir_ / "ragged.csv") << "id,x_mm,y_mm,frac_a,frac_b,frac_c,1.0,2.0\na,0,0,0.2,0.3,0.5,1\n";
    r = run("binarize --in ragged.csv --threshold 1 --windows 1");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingFilesExitWithTwo) {
    EXPECT_EQ(run("map --in nope.json --th 1 --ot 1").code, 2);
    EXPECT_EQ(run("plot --result nope.json --dataset nope.csv").code, 2);
}

TEST_F(CliTest, ErrorsJsonIsMachineReadable) {
    const CliRun r = run("--errors-json map --in nope.json --th 1 --ot 1");
    EXPECT_EQ(r.code, 2);
    const json j = json::parse(r.err);
    EXPECT_EQ(j["error"]["exit_code"], 2);
    EXPECT_FALSE(j["error"]["message"].get<std::string>().empty());
    EXPECT_TRUE(j["error"].contains("kind"));
}
