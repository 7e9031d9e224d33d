#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(NES_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("nes_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("") == 2);                 // missing subcommand
    CHECK(run_cli("bogus") == 2);            // unknown subcommand
    CHECK(run_cli("train --variant nes-x --manifest m.json --out o") == 2);
    CHECK(run_cli("train --manifest m.json --out o") == 2);  // missing --variant
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("data errors exit with code 1") {
    TempDir dir("dataerr");
    CHECK(run_cli("train --manifest " + (dir.path / "missing.json").string() +
                  " --variant nes-i --out " + (dir.path / "out").string()) == 1);
    CHECK(run_cli("eval --manifest m.json --model nope.nesm --out " +
                  (dir.path / "out").string()) == 1);
}

TEST_CASE("synth, train, eval, and recover round trip") {
    TempDir dir("roundtrip");
    {
        std::ofstream cfg(dir.path / "synth.json");
        cfg << R"({"n_classes":2,"n_channels":3,"feature_dim":24,"trials_per_class":8,
                   "noise_level":0.1,"gate_strength":1.0,"seed":5})";
    }
    const std::string data = (dir.path / "data").string();
    REQUIRE(run_cli("synth --config " + (dir.path / "synth.json").string() + " --out " + data) ==
            0);
    CHECK(fs::exists(dir.path / "data" / "manifest.json"));
    CHECK(fs::exists(dir.path / "data" / "ground_truth.json"));

    const std::string run = (dir.path / "run").string();
    REQUIRE(run_cli("train --manifest " + data + "/manifest.json --variant nes-b --out " + run +
                    " --epochs 8 --batch-size 8 --features 24 --hidden 12 --seed 3"
                    " --eval-count 2 --split-seed 1") == 0);
    CHECK(fs::exists(dir.path / "run" / "model.nesm"));
    CHECK(fs::exists(dir.path / "run" / "report.json"));

    // the train report holds the config echo and per-epoch history
    nlohmann::json report;
    std::ifstream(dir.path / "run" / "report.json") >> report;
    CHECK(report.at("command") == "train");
    CHECK(report.at("config").at("variant") == "nes-b");
    CHECK(report.at("history").size() == 8);

    const std::string eval_dir = (dir.path / "eval").string();
    REQUIRE(run_cli("eval --manifest " + data + "/manifest.json --model " + run +
                    "/model.nesm --out " + eval_dir + " --eval-count 2 --split-seed 1") == 0);
    nlohmann::json eval_report;
    std::ifstream(dir.path / "eval" / "report.json") >> eval_report;
    CHECK(eval_report.at("binary").contains("uw"));
    CHECK(eval_report.at("confusion").at("counts").size() == 2);

    const std::string rec_dir = (dir.path / "rec").string();
    REQUIRE(run_cli("recover --manifest " + data + "/manifest.json --model " + run +
                    "/model.nesm --out " + rec_dir) == 0);
    CHECK(fs::exists(dir.path / "rec" / "envelopes.csv"));
    CHECK(fs::exists(dir.path / "rec" / "report.json"));
}

TEST_CASE("seeded training is byte-reproducible") {
    TempDir dir("determinism");
    {
        std::ofstream cfg(dir.path / "synth.json");
        cfg << R"({"n_classes":2,"n_channels":3,"feature_dim":20,"trials_per_class":6,
                   "noise_level":0.1,"seed":9})";
    }
    const std::string data = (dir.path / "data").string();
    REQUIRE(run_cli("synth --config " + (dir.path / "synth.json").string() + " --out " + data) ==
            0);
    const std::string base = " --manifest " + data +
                             "/manifest.json --variant nes-g --epochs 6 --batch-size 6"
                             " --features 20 --hidden 8 --lr 0.005 --cd-lr-scale 0.1 --seed 7";
    REQUIRE(run_cli("train" + base + " --out " + (dir.path / "a").string()) == 0);
    REQUIRE(run_cli("train" + base + " --out " + (dir.path / "b").string()) == 0);
    CHECK(slurp(dir.path / "a" / "model.nesm") == slurp(dir.path / "b" / "model.nesm"));
    CHECK(slurp(dir.path / "a" / "report.json") == slurp(dir.path / "b" / "report.json"));
    CHECK(!slurp(dir.path / "a" / "model.nesm").empty());
}

TEST_CASE("gradcheck subcommand reports success") {
    CHECK(run_cli("gradcheck --variant nes-i --instances 3 --seed 2") == 0);
}
