#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout only
};

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "tcs_cli_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliResult run_cli(const std::string& args) {
    const fs::path out_file = work_dir() / "stdout.txt";
    const std::string cmd =
        std::string(TCS_CLI_PATH) + " " + args + " > " + out_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    res.output = ss.str();
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("simulate writes rate * duration records", "[cli]") {
    const fs::path out = work_dir() / "duel.jsonl";
    const CliResult res =
        run_cli("simulate --scenario duel --duration 60 --seed 7 --out " + out.string());
    REQUIRE(res.exit_code == 0);
    // Header line plus one line per record.
    CHECK(line_count(slurp(out)) == 1501);
}

TEST_CASE("simulate usage errors exit 2", "[cli]") {
    CHECK(run_cli("simulate --scenario nope --duration 5 --out /tmp/x.jsonl").exit_code == 2);
    CHECK(run_cli("simulate --scenario follow --duration 0 --out /tmp/x.jsonl").exit_code == 2);
    CHECK(run_cli("simulate --bogus-flag 1").exit_code == 2);
    CHECK(run_cli("nonsense-subcommand").exit_code == 2);
}

TEST_CASE("simulate is seed reproducible", "[cli]") {
    const fs::path a = work_dir() / "rep_a.jsonl";
    const fs::path b = work_dir() / "rep_b.jsonl";
    REQUIRE(run_cli("simulate --scenario static --duration 3 --seed 11 --out " + a.string())
                .exit_code == 0);
    REQUIRE(run_cli("simulate --scenario static --duration 3 --seed 11 --out " + b.string())
                .exit_code == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("TCS_SEED env var acts as seed fallback", "[cli]") {
    const fs::path a = work_dir() / "env_a.jsonl";
    const fs::path b = work_dir() / "env_b.jsonl";
    setenv("TCS_SEED", "99", 1);
    REQUIRE(run_cli("simulate --scenario static --duration 2 --out " + a.string()).exit_code ==
            0);
    unsetenv("TCS_SEED");
    REQUIRE(run_cli("simulate --scenario static --duration 2 --seed 99 --out " + b.string())
                .exit_code == 0);
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("train echoes stock defaults and writes artifacts", "[cli]") {
    const fs::path data = work_dir() / "train_small.jsonl";
    REQUIRE(run_cli("simulate --scenario static --duration 12 --seed 3 --out " + data.string())
                .exit_code == 0);
    const fs::path ckpt = work_dir() / "model.tcsw";
    const CliResult res = run_cli("train --data " + data.string() + " --epochs 1 --seed 1 --out " +
                                  ckpt.string());
    REQUIRE(res.exit_code == 0);
    CHECK(res.output.find("k = 64") != std::string::npos);
    CHECK(res.output.find("p = 0.1") != std::string::npos);
    CHECK(res.output.find("alpha = 0.99") != std::string::npos);
    CHECK(res.output.find("batch_size = 32") != std::string::npos);
    CHECK(res.output.find("weight_fn = x") != std::string::npos);
    CHECK(res.output.find("lr = 5e-05") != std::string::npos);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(work_dir() / "model.tcsw.metrics.csv"));
}

TEST_CASE("train error exits", "[cli]") {
    CHECK(run_cli("train --data /nonexistent.jsonl --out /tmp/m.tcsw").exit_code == 3);
    const fs::path data = work_dir() / "train_small.jsonl";
    CHECK(run_cli("train --data " + data.string() + " --epochs 0 --out /tmp/m.tcsw")
              .exit_code == 2);
}

TEST_CASE("eval produces report rows for requested detectors", "[cli]") {
    const fs::path data = work_dir() / "eval_data.jsonl";
    REQUIRE(run_cli("simulate --scenario static --duration 6 --seed 5 --out " + data.string())
                .exit_code == 0);
    const fs::path ckpt = work_dir() / "model.tcsw";
    REQUIRE(fs::exists(ckpt));  // from the train test above
    const fs::path report = work_dir() / "report.csv";
    const CliResult res = run_cli("eval --data " + data.string() + " --ckpt " + ckpt.string() +
                                  " --abd --track --ref auto --out " + report.string());
    REQUIRE(res.exit_code == 0);
    const std::string csv = slurp(report);
    CHECK(line_count(csv) == 5);  // header + {abd,nn} x {untracked,tracked}
    CHECK(csv.find("abd,-,no") != std::string::npos);
    CHECK(csv.find("abd,-,yes") != std::string::npos);
    CHECK(csv.find("nn,no,yes") != std::string::npos);
    // ABD untracked row has no velocity columns.
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header
    std::getline(lines, line);
    CHECK(line.find("-,-,-,-") != std::string::npos);
    CHECK(fs::exists(work_dir() / "report.csv.details.csv"));
}

TEST_CASE("eval without ground truth exits 5", "[cli]") {
    // A dataset whose records carry no opponents.
    const fs::path data = work_dir() / "no_gt.jsonl";
    {
        std::ofstream os(data);
        os << R"({"version":1,"beams":11,"fov":4.712,"r_max":10.0,"rate":25.0})" << '\n';
        os << R"({"t":0.0,"ego":[0,0,0],"opps":[],"hits":[[5,2.0,0.5]]})" << '\n';
        os << R"({"t":0.04,"ego":[0,0,0],"opps":[],"hits":[[5,2.0,0.5]]})" << '\n';
    }
    const fs::path ckpt = work_dir() / "model.tcsw";
    CHECK(run_cli("eval --data " + data.string() + " --ckpt " + ckpt.string() +
                  " --ref auto --out /tmp/r.csv")
              .exit_code == 5);
}

TEST_CASE("infer emits one JSON line per frame", "[cli]") {
    const fs::path data = work_dir() / "eval_data.jsonl";
    const fs::path ckpt = work_dir() / "model.tcsw";
    const CliResult res =
        run_cli("infer --scan-stream " + data.string() + " --ckpt " + ckpt.string());
    REQUIRE(res.exit_code == 0);
    CHECK(line_count(res.output) == 150);  // 6 s * 25 Hz
    CHECK(res.output.find("\"detections\"") != std::string::npos);
}

TEST_CASE("bench reports float and quantized latency", "[cli]") {
    const fs::path ckpt = work_dir() / "model.tcsw";
    const CliResult res = run_cli("bench --ckpt " + ckpt.string() + " --frames 5 --seed 2");
    REQUIRE(res.exit_code == 0);
    CHECK(res.output.find("float: mean") != std::string::npos);
    CHECK(res.output.find("quantized: mean") != std::string::npos);
    CHECK(run_cli("bench --ckpt " + ckpt.string() + " --frames 0").exit_code == 2);
}

TEST_CASE("plot emits SVG curves and PGM heatmaps", "[cli]") {
    const fs::path metrics = work_dir() / "model.tcsw.metrics.csv";
    const fs::path plots = work_dir() / "plots";
    const CliResult res = run_cli("plot --report " + metrics.string() + " --out " +
                                  plots.string() + " --ckpt " + (work_dir() / "model.tcsw").string() +
                                  " --data " + (work_dir() / "eval_data.jsonl").string() +
                                  " --frame 3");
    REQUIRE(res.exit_code == 0);
    CHECK(fs::exists(plots / "curves.svg"));
    CHECK(fs::exists(plots / "heatmap_pos.pgm"));
    CHECK(fs::exists(plots / "heatmap_yaw.pgm"));
    CHECK(fs::exists(plots / "input_occupancy.pgm"));
}

TEST_CASE("plot on an empty report exits 5", "[cli]") {
    const fs::path empty = work_dir() / "empty.csv";
    {
        std::ofstream os(empty);
        os << "a,b,c\n";
    }
    CHECK(run_cli("plot --report " + empty.string() + " --out " +
                  (work_dir() / "plots2").string())
              .exit_code == 5);
}

TEST_CASE("help is available everywhere", "[cli]") {
    CHECK(run_cli("--help").exit_code == 0);
    for (const char* sub : {"simulate", "train", "eval", "infer", "bench", "plot"}) {
        const CliResult res = run_cli(std::string(sub) + " --help");
        CHECK(res.exit_code == 0);
        CHECK(res.output.find("--") != std::string::npos);
    }
}
