// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line tool: each case launches the
// installed binary as a subprocess and inspects exit codes and the files
// it leaves behind.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin() { return CROPRL_BIN; }

fs::path test_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() /
                     ("croprl-cli-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

// Fresh per-case scratch directory.
fs::path scratch(const std::string& name) {
    fs::path p = test_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

struct RunResult {
    int code = -1;
    std::string output;  // stdout and stderr, merged
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    fs::path log = dir / "run.log";
    std::string cmd = "\"" + bin() + "\" " + args + " > " + q(log) + " 2>&1";
    int status = std::system(cmd.c_str());
    RunResult r;
    if (status == -1) {
        r.code = -1;
    } else if (WIFEXITED(status)) {
        r.code = WEXITSTATUS(status);
    } else {
        r.code = 128;  // killed by signal; always a failure for these tests
    }
    std::ifstream in(log, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing file: " << p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> nonempty_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(bool(out));
    out << text;
}

// Small-but-real training budget so the train/eval cases finish quickly.
fs::path write_small_config(const fs::path& dir) {
    json cfg = {
        {"cold_start", {{"size", 400}}},
        {"sft", {{"steps", 200}}},
        {"grpo", {{"steps", 25}}},
        {"eval", {{"episodes", 600}}},
    };
    fs::path p = dir / "config.json";
    write_file(p, cfg.dump() + "\n");
    return p;
}

}  // namespace

TEST_CASE("argument errors exit with code 2") {
    fs::path dir = scratch("argerr");

    CHECK(run_cli("", dir).code == 2);  // a subcommand is required

    RunResult help = run_cli("--help", dir);
    CHECK(help.code == 0);
    CHECK(help.output.find("synth") != std::string::npos);
    CHECK(help.output.find("curate") != std::string::npos);

    CHECK(run_cli("synth --bogus-flag", dir).code == 2);
    CHECK(run_cli("synth --count 0 --out " + q(dir / "o"), dir).code == 2);
    CHECK(run_cli("train --stage bogus --out " + q(dir / "o"), dir).code == 2);
    CHECK(run_cli("curate --out " + q(dir / "o"), dir).code == 2);  // --dataset required
    CHECK(run_cli("report", dir).code == 2);                        // --history required
}

TEST_CASE("synth writes a dataset and a matching fixture, deterministically") {
    fs::path dir = scratch("synth");
    fs::path out_a = dir / "a";
    fs::path out_b = dir / "b";

    RunResult r = run_cli("synth --seed 7 --count 25 --out " + q(out_a), dir);
    CHECK_MESSAGE(r.code == 0, r.output);

    std::string dataset = slurp(out_a / "dataset.jsonl");
    auto rows = nonempty_lines(dataset);
    REQUIRE(rows.size() == 25);
    json first = json::parse(rows.front());
    CHECK(first.at("sample_id") == "ep-000000");
    CHECK(first.at("image").get<std::string>().rfind("synthetic://", 0) == 0);
    CHECK(first.at("width").get<int>() > 0);
    CHECK(first.at("height").get<int>() > 0);
    CHECK(first.at("question").is_string());
    CHECK(first.at("answer").is_string());

    json fixture = json::parse(slurp(out_a / "fixtures.json"));
    CHECK(fixture.is_object());

    RunResult r2 = run_cli("synth --seed 7 --count 25 --out " + q(out_b), dir);
    CHECK(r2.code == 0);
    CHECK(slurp(out_b / "dataset.jsonl") == dataset);
    CHECK(slurp(out_b / "fixtures.json") == slurp(out_a / "fixtures.json"));
}

TEST_CASE("curate consumes the synth fixture and is run-to-run identical") {
    fs::path dir = scratch("curate");
    fs::path data = dir / "data";
    REQUIRE(run_cli("synth --seed 7 --count 25 --out " + q(data), dir).code == 0);
    std::string inputs = " --dataset " + q(data / "dataset.jsonl") +
                         " --mock-fixtures " + q(data / "fixtures.json") + " --seed 7";

    fs::path out_a = dir / "a";
    RunResult r = run_cli("curate" + inputs + " --out " + q(out_a), dir);
    CHECK_MESSAGE(r.code == 0, r.output);

    std::string records = slurp(out_a / "records.jsonl");
    auto rows = nonempty_lines(records);
    REQUIRE(rows.size() == 25);
    json rec = json::parse(rows.front());
    CHECK(rec.contains("sample_id"));
    CHECK(rec.contains("label"));
    CHECK(rec.contains("target_crops"));

    json summary = json::parse(slurp(out_a / "summary.json"));
    CHECK(summary.at("total").get<int>() == 25);
    CHECK(summary.at("failed").get<int>() == 0);
    CHECK(summary.at("lr").get<int>() + summary.at("hr").get<int>() == 25);

    fs::path out_b = dir / "b";
    RunResult r2 = run_cli("curate" + inputs + " --out " + q(out_b), dir);
    CHECK(r2.code == 0);
    CHECK(slurp(out_b / "records.jsonl") == records);
    CHECK(slurp(out_b / "summary.json") == slurp(out_a / "summary.json"));

    // The anls labeler needs no judge calls, so the same fixture serves it.
    fs::path out_c = dir / "c";
    RunResult r3 = run_cli("curate" + inputs + " --labeler anls --out " + q(out_c), dir);
    CHECK_MESSAGE(r3.code == 0, r3.output);
    json summary_c = json::parse(slurp(out_c / "summary.json"));
    CHECK(summary_c.at("total").get<int>() == 25);
    CHECK(summary_c.at("failed").get<int>() == 0);

    CHECK(run_cli("curate" + inputs + " --labeler nonsense --out " + q(dir / "d"),
                  dir).code == 2);
}

TEST_CASE("curate refuses bad inputs before creating any output") {
    fs::path dir = scratch("curate-err");
    fs::path data = dir / "data";
    REQUIRE(run_cli("synth --seed 7 --count 5 --out " + q(data), dir).code == 0);

    // Neither --mock-fixtures nor --endpoint.
    CHECK(run_cli("curate --dataset " + q(data / "dataset.jsonl") + " --out " +
                      q(dir / "o1"),
                  dir).code == 2);
    CHECK_FALSE(fs::exists(dir / "o1" / "records.jsonl"));

    // Unreadable dataset: fails before the output directory is made.
    fs::path out2 = dir / "o2";
    RunResult r = run_cli("curate --dataset " + q(dir / "missing.jsonl") +
                              " --mock-fixtures " + q(data / "fixtures.json") +
                              " --out " + q(out2),
                          dir);
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(out2));

    // Malformed dataset line: also rejected up front, no partial output.
    fs::path bad = dir / "bad.jsonl";
    write_file(bad, "{\"sample_id\": \"x\"}\n");
    fs::path out3 = dir / "o3";
    RunResult r3 = run_cli("curate --dataset " + q(bad) + " --mock-fixtures " +
                               q(data / "fixtures.json") + " --out " + q(out3),
                           dir);
    CHECK(r3.code == 2);
    CHECK_FALSE(fs::exists(out3));

    // Unreadable fixture file.
    CHECK(run_cli("curate --dataset " + q(data / "dataset.jsonl") +
                      " --mock-fixtures " + q(dir / "missing-fixture.json") +
                      " --out " + q(dir / "o4"),
                  dir).code == 2);
}

TEST_CASE("train stages emit the expected artifacts, reproducibly") {
    fs::path dir = scratch("train");
    fs::path cfg = write_small_config(dir);
    std::string common = " --config " + q(cfg) + " --seed 3";

    fs::path sft_dir = dir / "sft";
    RunResult r = run_cli("train --stage sft-only" + common + " --out " + q(sft_dir), dir);
    CHECK_MESSAGE(r.code == 0, r.output);
    CHECK(fs::exists(sft_dir / "policy_ref.json"));
    CHECK_FALSE(fs::exists(sft_dir / "policy.json"));
    CHECK_FALSE(fs::exists(sft_dir / "history.jsonl"));
    json ref = json::parse(slurp(sft_dir / "policy_ref.json"));
    CHECK(ref.at("format_version").get<int>() == 1);

    fs::path full_a = dir / "full-a";
    RunResult rf = run_cli("train --stage full" + common + " --out " + q(full_a), dir);
    CHECK_MESSAGE(rf.code == 0, rf.output);
    CHECK(fs::exists(full_a / "policy_ref.json"));
    CHECK(fs::exists(full_a / "policy.json"));
    auto history = nonempty_lines(slurp(full_a / "history.jsonl"));
    REQUIRE(history.size() == 25);
    json step0 = json::parse(history.front());
    for (const char* key : {"step", "mean_reward", "call_rate", "mean_area", "rtr", "kl"}) {
        CHECK_MESSAGE(step0.contains(key), "history line lacks " << key);
    }
    CHECK(step0.at("step").get<int>() == 0);
    CHECK(json::parse(history.back()).at("step").get<int>() == 24);

    // Same seed, same config: byte-identical artifacts.
    fs::path full_b = dir / "full-b";
    REQUIRE(run_cli("train --stage full" + common + " --out " + q(full_b), dir).code == 0);
    CHECK(slurp(full_b / "policy.json") == slurp(full_a / "policy.json"));
    CHECK(slurp(full_b / "history.jsonl") == slurp(full_a / "history.jsonl"));
    CHECK(slurp(full_b / "policy_ref.json") == slurp(full_a / "policy_ref.json"));

    // grpo-only resumes from an explicit start policy and writes no new reference.
    fs::path gdir = dir / "grpo-only";
    CHECK(run_cli("train --stage grpo-only" + common + " --out " + q(gdir), dir).code == 2);
    RunResult rg = run_cli("train --stage grpo-only" + common + " --init-policy " +
                               q(sft_dir / "policy_ref.json") + " --out " + q(gdir),
                           dir);
    CHECK_MESSAGE(rg.code == 0, rg.output);
    CHECK(fs::exists(gdir / "policy.json"));
    CHECK(fs::exists(gdir / "history.jsonl"));
    CHECK_FALSE(fs::exists(gdir / "policy_ref.json"));

    // Starting from the sft-only reference reproduces the full run's output.
    CHECK(slurp(gdir / "policy.json") == slurp(full_a / "policy.json"));

    // train from curated records: synth + curate, then clone from the records.
    fs::path data = dir / "data";
    REQUIRE(run_cli("synth --seed 11 --count 40 --out " + q(data), dir).code == 0);
    fs::path cur = dir / "cur";
    REQUIRE(run_cli("curate --dataset " + q(data / "dataset.jsonl") +
                        " --mock-fixtures " + q(data / "fixtures.json") + " --seed 11" +
                        " --out " + q(cur),
                    dir).code == 0);
    fs::path tcur = dir / "train-curated";
    RunResult rc = run_cli("train --stage sft-only" + common + " --curated " +
                               q(cur / "records.jsonl") + " --dataset-seed 11 --out " +
                               q(tcur),
                           dir);
    CHECK_MESSAGE(rc.code == 0, rc.output);
    CHECK(fs::exists(tcur / "policy_ref.json"));
}

TEST_CASE("eval modes produce reports with the expected shape") {
    fs::path dir = scratch("eval");
    fs::path cfg = write_small_config(dir);
    std::string common = " --config " + q(cfg) + " --seed 3";

    // Exactly one mode must be chosen.
    CHECK(run_cli("eval" + common + " --out " + q(dir / "none"), dir).code == 2);
    CHECK(run_cli("eval --oracle --never-call" + common + " --out " + q(dir / "two"),
                  dir).code == 2);

    fs::path nc = dir / "never-call";
    RunResult r = run_cli("eval --never-call" + common + " --out " + q(nc), dir);
    CHECK_MESSAGE(r.code == 0, r.output);
    json report = json::parse(slurp(nc / "report.json"));
    CHECK(report.at("count").get<int>() == 600);
    CHECK(report.at("call_rate").get<double>() == 0.0);
    CHECK(report.at("rtr").get<double>() == 0.25);
    CHECK(report.at("call_precision").is_null());    // never called: no positives
    CHECK(report.at("exact_match_rate").is_null());  // no called sample has targets
    CHECK(report.at("avg_called_area").is_null());
    double acc = report.at("accuracy").get<double>();
    CHECK(acc > 0.5);
    CHECK(acc < 0.9);  // direct answers lose most fine-grained episodes

    fs::path orc = dir / "oracle";
    RunResult ro = run_cli("eval --oracle --report table" + common + " --out " + q(orc),
                           dir);
    CHECK_MESSAGE(ro.code == 0, ro.output);
    CHECK(ro.output.find("accuracy") != std::string::npos);
    json oracle = json::parse(slurp(orc / "report.json"));
    CHECK(oracle.at("accuracy").get<double>() > 0.9);
    CHECK(oracle.at("call_precision").get<double>() == 1.0);
    CHECK(oracle.at("call_recall").get<double>() == 1.0);
    // The hint-following policy misses the true region exactly on the
    // flipped-hint share, so exact match sits near 0.9, not at 1.0.
    double exact = oracle.at("exact_match_rate").get<double>();
    CHECK(exact > 0.8);
    CHECK(exact < 0.97);
    CHECK(oracle.at("relaxed_match_rate").get<double>() >= exact);

    // A trained policy evaluates cleanly too.
    fs::path tdir = dir / "train";
    REQUIRE(run_cli("train --stage full" + common + " --out " + q(tdir), dir).code == 0);
    fs::path pol = dir / "policy";
    RunResult rp = run_cli("eval --policy " + q(tdir / "policy.json") + common +
                               " --out " + q(pol),
                           dir);
    CHECK_MESSAGE(rp.code == 0, rp.output);
    json preport = json::parse(slurp(pol / "report.json"));
    CHECK(preport.at("count").get<int>() == 600);
    CHECK(preport.at("accuracy").get<double>() > 0.0);

    // Unreadable or malformed policy files are usage errors.
    CHECK(run_cli("eval --policy " + q(dir / "missing.json") + common + " --out " +
                      q(dir / "p1"),
                  dir).code == 2);
    fs::path junk = dir / "junk.json";
    write_file(junk, "not json\n");
    CHECK(run_cli("eval --policy " + q(junk) + common + " --out " + q(dir / "p2"),
                  dir).code == 2);
}

TEST_CASE("report renders history files as CSV") {
    fs::path dir = scratch("report");
    fs::path cfg = write_small_config(dir);
    fs::path tdir = dir / "train";
    REQUIRE(run_cli("train --stage full --config " + q(cfg) + " --seed 3 --out " +
                        q(tdir),
                    dir).code == 0);

    fs::path csv_path = dir / "history.csv";
    RunResult r = run_cli("report --history " + q(tdir / "history.jsonl") + " --out " +
                              q(csv_path),
                          dir);
    CHECK_MESSAGE(r.code == 0, r.output);
    auto csv = nonempty_lines(slurp(csv_path));
    REQUIRE(csv.size() == 26);  // header + 25 steps
    CHECK(csv.front() == "step,mean_reward,call_rate,mean_area,rtr,kl");
    CHECK(csv[1].rfind("0,", 0) == 0);  // steps are zero-indexed

    // Without --out the CSV goes to stdout.
    RunResult rs = run_cli("report --history " + q(tdir / "history.jsonl"), dir);
    CHECK(rs.code == 0);
    CHECK(rs.output.rfind("step,mean_reward,call_rate,mean_area,rtr,kl", 0) == 0);

    CHECK(run_cli("report --history " + q(dir / "missing.jsonl"), dir).code == 2);
    fs::path bad = dir / "bad.jsonl";
    write_file(bad, "{\"step\": 1}\n");
    CHECK(run_cli("report --history " + q(bad), dir).code == 2);
}

TEST_CASE("config problems are reported as exit code 2") {
    fs::path dir = scratch("config");

    fs::path unknown = dir / "unknown.json";
    write_file(unknown, "{\"grpo\": {\"lr\": 0.1}}\n");
    RunResult r = run_cli("synth --config " + q(unknown) + " --out " + q(dir / "o1"),
                          dir);
    CHECK(r.code == 2);
    CHECK(r.output.find("config error") != std::string::npos);
    CHECK(r.output.find("grpo.lr") != std::string::npos);

    fs::path laaj = dir / "laaj.json";
    write_file(laaj, "{\"reward\": {\"scorer\": \"laaj\"}}\n");
    RunResult r2 = run_cli("synth --config " + q(laaj) + " --out " + q(dir / "o2"), dir);
    CHECK(r2.code == 2);
    CHECK(r2.output.find("laaj") != std::string::npos);

    CHECK(run_cli("synth --config " + q(dir / "missing.json") + " --out " + q(dir / "o3"),
                  dir).code == 2);
}
