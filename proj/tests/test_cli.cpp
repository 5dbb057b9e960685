// End-to-end checks of the command-line tool. The binary path comes in via
// the SOFTHJB_CLI environment variable set by CTest.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("SOFTHJB_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args) {
    std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("softhjb_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Small 1D problem that a couple of cheap iterations can make progress on.
fs::path write_mini_config(const fs::path& dir) {
    fs::path p = dir / "mini.json";
    std::ofstream out(p);
    out << R"({
  "problem": {
    "kind": "lqr", "rho": 1.0, "lambda": 0.1,
    "domain": {"R": 2.0, "shape": "box", "cutoff_width": 0.5},
    "control": {"bound": 5.0},
    "lqr": {"d": 1, "m": 1, "A": [-1.0], "B": [1.0], "Q": [1.0], "R": [1.0], "sigma": 0.5}
  },
  "quad": {"per_dim": 17},
  "colloc": {"N": 96, "seed": 7, "resample": false},
  "opt": {"lr_value": 2e-3, "lr_policy": 2e-3, "epochs_value": 120, "epochs_policy": 60},
  "pi": {"max_iters": 3, "epsilon": 1e-9, "value_hidden": [16], "policy_hidden": [16],
         "quadratic_init": true, "warmup_epochs": 80},
  "eval": {"enabled": false}
})";
    return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("missing or malformed config exits with code 2") {
    auto dir = fresh_dir("badcfg");
    CHECK(run("solve --config /nonexistent.json --out " + (dir / "o").string()) == 2);
    fs::path bad = dir / "bad.json";
    std::ofstream(bad) << "{\"problem\": {\"kind\": \"lqr\"}, \"mystery\": 1}";
    CHECK(run("solve --config " + bad.string() + " --out " + (dir / "o2").string()) == 2);
}

TEST_CASE("solve writes a manifest, a ledger, and checkpoints") {
    auto dir = fresh_dir("solve");
    auto cfg = write_mini_config(dir);
    fs::path out = dir / "run";
    REQUIRE(run("solve --config " + cfg.string() + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "value_final.json"));
    CHECK(fs::exists(out / "policy_final.json"));
    auto lines = read_lines(out / "ledger.csv");
    REQUIRE(lines.size() >= 2);  // header + at least one iteration
    CHECK(lines[0].rfind("n,", 0) == 0);
}

TEST_CASE("a manifest reruns the same experiment bit for bit") {
    auto dir = fresh_dir("rerun");
    auto cfg = write_mini_config(dir);
    fs::path a = dir / "a", b = dir / "b";
    REQUIRE(run("solve --config " + cfg.string() + " --out " + a.string()) == 0);
    REQUIRE(run("solve --config " + (a / "manifest.json").string() + " --out " + b.string()) == 0);
    CHECK(slurp(a / "ledger.csv") == slurp(b / "ledger.csv"));
}

TEST_CASE("verify runs the requested check and rejects unknown selectors") {
    auto dir = fresh_dir("verify");
    CHECK(run("verify --lemma prop1 --trials 40 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "lemma_prop1.csv"));
    CHECK(fs::exists(dir / "verify_summary.json"));
    CHECK(run("verify --lemma nope --out " + dir.string()) == 2);
}

TEST_CASE("verify --lemma all writes one csv per check") {
    auto dir = fresh_dir("verify_all");
    REQUIRE(run("verify --lemma all --trials 20 --out " + dir.string()) == 0);
    for (const char* id : {"lemma1", "lemma2", "lemma3", "prop1", "pinsker"})
        CHECK(fs::exists(dir / ("lemma_" + std::string(id) + ".csv")));
}

TEST_CASE("oracle emits the grid solution and a refinement table") {
    auto dir = fresh_dir("oracle");
    auto cfg = write_mini_config(dir);
    fs::path out = dir / "orc";
    REQUIRE(run("oracle --config " + cfg.string() + " --grid-n 33 --out " + out.string()) == 0);
    CHECK(read_lines(out / "oracle_v.csv").size() > 30);
    CHECK(read_lines(out / "oracle_convergence.csv").size() >= 2);
}

TEST_CASE("oracle refuses problems above two state dimensions") {
    auto dir = fresh_dir("oracle_hi");
    fs::path cfg = dir / "lqr3.json";
    std::ofstream(cfg) << R"({
  "problem": {
    "kind": "lqr", "rho": 1.0, "lambda": 0.2,
    "domain": {"R": 1.5, "shape": "ball", "cutoff_width": 0.4},
    "control": {"bound": 10.0},
    "lqr": {"d": 3, "m": 1, "seed": 99, "sigma": 0.1}
  },
  "quad": {"per_dim": 9}, "colloc": {"N": 64, "seed": 1, "resample": false},
  "opt": {"epochs_value": 10, "epochs_policy": 10},
  "pi": {"max_iters": 1}, "eval": {"enabled": false}
})";
    CHECK(run("oracle --config " + cfg.string() + " --out " + (dir / "o").string()) == 5);
}

TEST_CASE("rollout and compare consume checkpoints from a finished run") {
    auto dir = fresh_dir("roundtrip");
    auto cfg = write_mini_config(dir);
    fs::path out = dir / "run";
    REQUIRE(run("solve --config " + cfg.string() + " --out " + out.string()) == 0);

    fs::path ro = dir / "ro";
    REQUIRE(run("rollout --config " + cfg.string() + " --checkpoint " +
                (out / "policy_final.json").string() + " --paths 32 --T 2 --out " +
                ro.string()) == 0);
    CHECK(fs::exists(ro / "rollout_summary.json"));
    CHECK(read_lines(ro / "eval.csv").size() >= 2);

    fs::path cm = dir / "cmp";
    REQUIRE(run("compare --config " + cfg.string() + " --checkpoint " +
                (out / "value_final.json").string() + " --out " + cm.string()) == 0);
    std::string summary = slurp(cm / "compare_summary.json");
    CHECK(summary.find("relative_l2") != std::string::npos);
}
